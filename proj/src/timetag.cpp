#include "tagsync/timetag.hpp"

#include "tagsync/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace tagsync {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'T', 'G', '1'};

bool mul_overflows(std::int64_t a, std::int64_t b) {
    std::int64_t out = 0;
    return __builtin_mul_overflow(a, b, &out);
}

template <typename T>
void put_le(std::string& buf, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        buf.push_back(static_cast<char>((value >> (8 * k)) & 0xFF));
    }
}

template <typename T>
T get_le(const unsigned char* p) {
    T value = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        value |= static_cast<T>(p[k]) << (8 * k);
    }
    return value;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failure on " + path.string());
    }
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw IoError("write failure on " + path.string());
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::int64_t parse_int(std::string_view text, std::size_t line) {
    text = trim(text);
    std::int64_t value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec == std::errc::result_out_of_range) {
        throw RangeError("integer out of range on line " + std::to_string(line));
    }
    if (ec != std::errc{} || ptr != last || first == last) {
        throw ParseError("malformed integer '" + std::string(text) + "'", line);
    }
    return value;
}

LoadResult finish(std::vector<Ticks> ticks, std::int64_t lsb, std::optional<std::int64_t> duration,
                  std::string clock_id) {
    LoadResult result;
    for (Ticks t : ticks) {
        if (t < 0) {
            throw ValidationError("negative timestamp " + std::to_string(t));
        }
    }
    if (!std::is_sorted(ticks.begin(), ticks.end())) {
        std::sort(ticks.begin(), ticks.end());
        result.sorted_on_load = true;
    }
    if (lsb < 1) {
        throw ValidationError("lsb_ps must be >= 1");
    }
    std::int64_t span = 0;
    if (duration) {
        span = *duration;
    } else if (!ticks.empty()) {
        if (mul_overflows(ticks.back(), lsb)) {
            throw RangeError("timestamp overflows 63-bit picoseconds");
        }
        span = ticks.back() * lsb;
    }
    result.stream = TagStream(std::move(ticks), lsb, span, std::move(clock_id));
    return result;
}

} // namespace

TagStream::TagStream(std::vector<Ticks> ticks, std::int64_t lsb_ps, std::int64_t duration_ps,
                     std::string clock_id)
    : ticks_(std::move(ticks)), lsb_ps_(lsb_ps), duration_ps_(duration_ps), clock_id_(std::move(clock_id)) {
    if (lsb_ps_ < 1) {
        throw ValidationError("lsb_ps must be >= 1");
    }
    if (duration_ps_ < 0) {
        throw ValidationError("duration_ps must be nonnegative");
    }
    if (!std::is_sorted(ticks_.begin(), ticks_.end())) {
        throw ValidationError("tags must be sorted nondecreasing");
    }
    if (!ticks_.empty()) {
        if (ticks_.front() < 0) {
            throw ValidationError("negative timestamp " + std::to_string(ticks_.front()));
        }
        if (mul_overflows(ticks_.back(), lsb_ps_)) {
            throw RangeError("timestamp overflows 63-bit picoseconds");
        }
        if (ticks_.back() * lsb_ps_ > duration_ps_) {
            throw ValidationError("tag " + std::to_string(ticks_.back()) + " exceeds duration_ps " +
                                  std::to_string(duration_ps_));
        }
    }
}

TagStream TagStream::head(std::size_t count) const {
    count = std::min(count, ticks_.size());
    return TagStream(std::vector<Ticks>(ticks_.begin(), ticks_.begin() + static_cast<std::ptrdiff_t>(count)),
                     lsb_ps_, duration_ps_, clock_id_);
}

StreamFormat detect_format(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::array<char, 4> head{};
    in.read(head.data(), head.size());
    return (in.gcount() == 4 && head == kMagic) ? StreamFormat::binary : StreamFormat::csv;
}

LoadResult parse_csv_stream(const std::string& text) {
    std::int64_t lsb = 1;
    std::optional<std::int64_t> duration;
    std::string clock_id;
    std::vector<Ticks> ticks;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;

        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view body = trim(line.substr(1));
            auto eq = body.find('=');
            if (eq == std::string_view::npos) continue; // plain comment
            std::string_view key = trim(body.substr(0, eq));
            std::string_view value = trim(body.substr(eq + 1));
            if (key == "lsb_ps") {
                lsb = parse_int(value, line_no);
                if (lsb < 1) throw ValidationError("lsb_ps must be >= 1");
            } else if (key == "duration_ps") {
                duration = parse_int(value, line_no);
                if (*duration < 0) throw ValidationError("duration_ps must be nonnegative");
            } else if (key == "clock_id") {
                clock_id = std::string(value);
            }
            continue;
        }
        ticks.push_back(parse_int(line, line_no));
    }
    return finish(std::move(ticks), lsb, duration, std::move(clock_id));
}

LoadResult load_stream(const std::filesystem::path& path, StreamFormat format) {
    const std::string bytes = read_file(path);
    if (format == StreamFormat::csv) {
        return parse_csv_stream(bytes);
    }

    constexpr std::size_t header = 4 + 4 + 8 + 8;
    if (bytes.size() < header || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
        throw ParseError("missing TTG1 header in " + path.string(), 1);
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto lsb = get_le<std::uint32_t>(p + 4);
    const auto duration = get_le<std::uint64_t>(p + 8);
    const auto count = get_le<std::uint64_t>(p + 16);
    if (count > (bytes.size() - header) / 8 || bytes.size() != header + count * 8) {
        throw ParseError("record count " + std::to_string(count) + " does not match file size", 1);
    }
    constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
    if (duration > kMax) {
        throw RangeError("duration_ps out of range");
    }
    std::vector<Ticks> ticks(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto raw = get_le<std::uint64_t>(p + header + 8 * k);
        if (raw > kMax) {
            throw RangeError("tick value out of range at record " + std::to_string(k));
        }
        ticks[k] = static_cast<Ticks>(raw);
    }
    return finish(std::move(ticks), static_cast<std::int64_t>(lsb), static_cast<std::int64_t>(duration), {});
}

LoadResult load_stream(const std::filesystem::path& path) { return load_stream(path, detect_format(path)); }

void save_stream(const TagStream& stream, const std::filesystem::path& path, StreamFormat format) {
    std::string buf;
    if (format == StreamFormat::csv) {
        buf.reserve(64 + stream.size() * 12);
        buf += "# lsb_ps=" + std::to_string(stream.lsb_ps()) + "\n";
        buf += "# duration_ps=" + std::to_string(stream.duration_ps()) + "\n";
        buf += "# clock_id=" + stream.clock_id() + "\n";
        std::array<char, 24> digits{};
        for (Ticks t : stream.ticks()) {
            auto [ptr, ec] = std::to_chars(digits.data(), digits.data() + digits.size(), t);
            buf.append(digits.data(), ptr);
            buf.push_back('\n');
        }
    } else {
        if (stream.lsb_ps() > std::numeric_limits<std::uint32_t>::max()) {
            throw RangeError("lsb_ps does not fit the binary header");
        }
        buf.reserve(24 + stream.size() * 8);
        buf.append(kMagic.data(), kMagic.size());
        put_le(buf, static_cast<std::uint32_t>(stream.lsb_ps()));
        put_le(buf, static_cast<std::uint64_t>(stream.duration_ps()));
        put_le(buf, static_cast<std::uint64_t>(stream.size()));
        for (Ticks t : stream.ticks()) {
            put_le(buf, static_cast<std::uint64_t>(t));
        }
    }
    write_file(path, buf);
}

TagStream shift_stream(const TagStream& stream, std::int64_t delta_ps) {
    if (delta_ps % stream.lsb_ps() != 0) {
        throw RangeError("shift of " + std::to_string(delta_ps) + " ps is not a multiple of the LSB");
    }
    const Ticks delta = delta_ps / stream.lsb_ps();
    if (!stream.empty() && stream.ticks().front() + delta < 0) {
        throw RangeError("shift by " + std::to_string(delta_ps) + " ps produces a negative tag");
    }
    std::vector<Ticks> shifted(stream.ticks().begin(), stream.ticks().end());
    for (Ticks& t : shifted) t += delta;
    const std::int64_t duration = stream.duration_ps() + delta_ps;
    if (duration < 0) {
        throw RangeError("shift by " + std::to_string(delta_ps) + " ps moves the stream span below zero");
    }
    return TagStream(std::move(shifted), stream.lsb_ps(), duration, stream.clock_id());
}

} // namespace tagsync
