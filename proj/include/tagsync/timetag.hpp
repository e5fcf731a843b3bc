#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tagsync {

/// Arrival time in LSB units of the recording device.
using Ticks = std::int64_t;

enum class StreamFormat { csv, binary };

/// A recorded single-photon time-tag sequence.
///
/// Tags are stored as integer tick counts, sorted nondecreasing, each within
/// [0, duration]. Duplicates are legal (two detections inside one LSB).
/// Instances are immutable after construction.
class TagStream {
public:
    TagStream() = default;

    /// Validates and takes ownership of `ticks`. Throws ValidationError when
    /// the tags are unsorted, negative, or beyond `duration_ps`; RangeError
    /// when a tag cannot be expressed in picoseconds without overflow.
    TagStream(std::vector<Ticks> ticks, std::int64_t lsb_ps, std::int64_t duration_ps,
              std::string clock_id = {});

    std::span<const Ticks> ticks() const noexcept { return ticks_; }
    std::size_t size() const noexcept { return ticks_.size(); }
    bool empty() const noexcept { return ticks_.empty(); }
    Ticks operator[](std::size_t k) const noexcept { return ticks_[k]; }

    std::int64_t lsb_ps() const noexcept { return lsb_ps_; }
    std::int64_t duration_ps() const noexcept { return duration_ps_; }
    const std::string& clock_id() const noexcept { return clock_id_; }

    /// Tag k in picoseconds.
    std::int64_t time_ps(std::size_t k) const noexcept { return ticks_[k] * lsb_ps_; }

    /// First `count` tags as a new stream (same metadata).
    TagStream head(std::size_t count) const;

    friend bool operator==(const TagStream&, const TagStream&) = default;

private:
    std::vector<Ticks> ticks_;
    std::int64_t lsb_ps_ = 1;
    std::int64_t duration_ps_ = 0;
    std::string clock_id_;
};

struct LoadResult {
    TagStream stream;
    bool sorted_on_load = false; // input was out of order and got sorted
};

/// Sniffs the format from the leading magic bytes.
StreamFormat detect_format(const std::filesystem::path& path);

LoadResult load_stream(const std::filesystem::path& path, StreamFormat format);
LoadResult load_stream(const std::filesystem::path& path);

/// Parses the CSV text body directly (used by load_stream and tests).
LoadResult parse_csv_stream(const std::string& text);

void save_stream(const TagStream& stream, const std::filesystem::path& path, StreamFormat format);

/// Adds `delta_ps` to every tag. Throws RangeError when a tag would go
/// negative or `delta_ps` is not a multiple of the LSB. The duration moves
/// with the tags, so opposite shifts compose to the identity.
TagStream shift_stream(const TagStream& stream, std::int64_t delta_ps);

} // namespace tagsync
