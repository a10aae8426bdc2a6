#include "corrotdr/cli/traceset.hpp"
#include "corrotdr/error.hpp"

#include <bit>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

namespace corrotdr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

constexpr const char* kMetaFile = "traceset.json";
constexpr const char* kTraceFile = "traces.f32";
constexpr const char* kReferenceFile = "reference.f32";

// Converts between host order and the little-endian file order in place.
void to_file_order(std::span<float> v)
{
    if constexpr (std::endian::native == std::endian::big) {
        for (float& x : v) {
            auto u = std::bit_cast<std::uint32_t>(x);
            u = __builtin_bswap32(u);
            x = std::bit_cast<float>(u);
        }
    }
}

[[noreturn]] void io_fail(const std::string& msg) { fail(ErrorCode::Io, msg); }

void write_floats(std::FILE* f, std::span<const float> v, std::vector<float>& scratch, const std::string& what)
{
    scratch.assign(v.begin(), v.end());
    to_file_order(scratch);
    if (std::fwrite(scratch.data(), sizeof(float), scratch.size(), f) != scratch.size()) {
        io_fail("short write to " + what);
    }
}

std::vector<float> read_floats(const fs::path& p, std::size_t expected)
{
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    if (ec) {
        io_fail("cannot stat " + p.string() + ": " + ec.message());
    }
    if (size != expected * sizeof(float)) {
        io_fail(p.string() + ": size " + std::to_string(size) + " bytes, metadata implies " +
                std::to_string(expected * sizeof(float)));
    }
    std::vector<float> v(expected);
    std::ifstream in(p, std::ios::binary);
    if (!in || !in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size))) {
        io_fail("cannot read " + p.string());
    }
    to_file_order(v);
    return v;
}

template <class T>
T field(const json& j, const char* key)
{
    if (!j.contains(key)) {
        io_fail(std::string("trace set metadata lacks '") + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        io_fail(std::string("trace set metadata field '") + key + "': " + e.what());
    }
}

}  // namespace

json TraceSetMeta::to_json() const
{
    return json{{"format", kTraceSetFormat},
                {"version", kTraceSetVersion},
                {"byte_order", "little"},
                {"sample_type", "float32"},
                {"sample_rate", sample_rate},
                {"bit_rate", bit_rate},
                {"samples_per_bit", samples_per_bit},
                {"trace_length", trace_length},
                {"trace_count", trace_count},
                {"reference_length", reference_length},
                {"wall_clock_s", wall_clock},
                {"wavelength_nm", wavelength},
                {"config_hash", config_hash},
                {"capture", capture},
                {"ground_truth", ground_truth},
                {"config", config}};
}

TraceSetMeta TraceSetMeta::from_json(const json& j)
{
    if (!j.is_object() || field<std::string>(j, "format") != kTraceSetFormat) {
        io_fail("not a trace set metadata document");
    }
    if (field<int>(j, "version") != kTraceSetVersion) {
        io_fail("unsupported trace set version");
    }
    TraceSetMeta m;
    m.sample_rate = field<double>(j, "sample_rate");
    m.bit_rate = field<double>(j, "bit_rate");
    m.samples_per_bit = field<int>(j, "samples_per_bit");
    m.trace_length = field<std::size_t>(j, "trace_length");
    m.trace_count = field<std::size_t>(j, "trace_count");
    m.reference_length = field<std::size_t>(j, "reference_length");
    m.wall_clock = field<std::vector<double>>(j, "wall_clock_s");
    m.wavelength = field<std::vector<double>>(j, "wavelength_nm");
    m.config_hash = field<std::string>(j, "config_hash");
    m.capture = j.value("capture", json::object());
    m.ground_truth = j.value("ground_truth", json::object());
    m.config = j.value("config", json::object());
    if (m.wall_clock.size() != m.trace_count || m.wavelength.size() != m.trace_count) {
        io_fail("trace set metadata: per-trace lists do not match trace_count");
    }
    if (m.sample_rate <= 0 || m.samples_per_bit < 1 || m.trace_length == 0) {
        io_fail("trace set metadata: invalid sampling parameters");
    }
    return m;
}

TraceSetWriter::TraceSetWriter(const fs::path& dir, TraceSetMeta meta, std::span<const float> reference)
    : dir_(dir), meta_(std::move(meta))
{
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
        io_fail("cannot create " + dir_.string() + ": " + ec.message());
    }
    // A stale metadata file would make a partial write look complete.
    fs::remove(dir_ / kMetaFile, ec);

    meta_.trace_count = 0;
    meta_.wall_clock.clear();
    meta_.wavelength.clear();
    meta_.reference_length = reference.size();

    std::FILE* ref = std::fopen((dir_ / kReferenceFile).c_str(), "wb");
    if (!ref) {
        io_fail("cannot write " + (dir_ / kReferenceFile).string());
    }
    try {
        write_floats(ref, reference, scratch_, kReferenceFile);
    } catch (...) {
        std::fclose(ref);
        throw;
    }
    if (std::fclose(ref) != 0) {
        io_fail("cannot close " + (dir_ / kReferenceFile).string());
    }
    traces_ = std::fopen((dir_ / kTraceFile).c_str(), "wb");
    if (!traces_) {
        io_fail("cannot write " + (dir_ / kTraceFile).string());
    }
}

TraceSetWriter::~TraceSetWriter()
{
    if (traces_) {
        std::fclose(traces_);
    }
}

void TraceSetWriter::append(std::span<const float> samples, double wall_clock, double wavelength)
{
    require(traces_ != nullptr, "trace set writer already finished");
    require(samples.size() == meta_.trace_length, "trace length does not match the trace set");
    write_floats(traces_, samples, scratch_, kTraceFile);
    meta_.wall_clock.push_back(wall_clock);
    meta_.wavelength.push_back(wavelength);
    ++meta_.trace_count;
}

void TraceSetWriter::append(std::span<const double> samples, double wall_clock, double wavelength)
{
    std::vector<float> f(samples.begin(), samples.end());
    append(std::span<const float>(f), wall_clock, wavelength);
}

void TraceSetWriter::finish()
{
    require(traces_ != nullptr, "trace set writer already finished");
    const int rc = std::fclose(traces_);
    traces_ = nullptr;
    if (rc != 0) {
        io_fail("cannot close " + (dir_ / kTraceFile).string());
    }
    std::ofstream out(dir_ / kMetaFile);
    out << meta_.to_json().dump(2) << '\n';
    if (!out) {
        io_fail("cannot write " + (dir_ / kMetaFile).string());
    }
}

void write_traceset(const fs::path& dir, const TraceSet& set)
{
    require(set.traces.size() == set.meta.wall_clock.size() && set.traces.size() == set.meta.wavelength.size(),
            "trace set: per-trace metadata does not match the trace count");
    TraceSetWriter w(dir, set.meta, set.reference);
    for (std::size_t i = 0; i < set.traces.size(); ++i) {
        w.append(std::span<const float>(set.traces[i]), set.meta.wall_clock[i], set.meta.wavelength[i]);
    }
    w.finish();
}

TraceSetMeta read_traceset_meta(const fs::path& dir)
{
    std::ifstream in(dir / kMetaFile);
    if (!in) {
        io_fail("cannot open " + (dir / kMetaFile).string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        io_fail((dir / kMetaFile).string() + ": " + e.what());
    }
    return TraceSetMeta::from_json(j);
}

TraceSet read_traceset(const fs::path& dir)
{
    TraceSet set;
    set.meta = read_traceset_meta(dir);
    set.reference = read_floats(dir / kReferenceFile, set.meta.reference_length);
    auto all = read_floats(dir / kTraceFile, set.meta.trace_count * set.meta.trace_length);
    set.traces.resize(set.meta.trace_count);
    for (std::size_t i = 0; i < set.meta.trace_count; ++i) {
        const auto* p = all.data() + i * set.meta.trace_length;
        set.traces[i].assign(p, p + set.meta.trace_length);
    }
    return set;
}

TraceSetReader::TraceSetReader(const fs::path& dir) : meta_(read_traceset_meta(dir))
{
    const auto ref = read_floats(dir / kReferenceFile, meta_.reference_length);
    reference_.samples.assign(ref.begin(), ref.end());
    reference_.sample_rate = meta_.sample_rate;

    const auto path = dir / kTraceFile;
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    const auto expected = meta_.trace_count * meta_.trace_length * sizeof(float);
    if (ec || size != expected) {
        io_fail(path.string() + ": missing or size does not match metadata");
    }
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) {
        io_fail("cannot open " + path.string());
    }
}

TraceSetReader::~TraceSetReader()
{
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void TraceSetReader::fetch_raw(std::size_t i, std::vector<float>& samples) const
{
    require(i < meta_.trace_count, "trace index out of range");
    samples.resize(meta_.trace_length);
    auto* dst = reinterpret_cast<char*>(samples.data());
    std::size_t remaining = meta_.trace_length * sizeof(float);
    auto offset = static_cast<off_t>(i * remaining);
    while (remaining > 0) {
        const ssize_t n = ::pread(fd_, dst, remaining, offset);
        if (n <= 0) {
            io_fail("short read from trace file");
        }
        dst += n;
        remaining -= static_cast<std::size_t>(n);
        offset += n;
    }
    to_file_order(samples);
}

void TraceSetReader::fetch(std::size_t i, std::vector<double>& samples, double& wall_clock, double& wavelength) const
{
    thread_local std::vector<float> raw;
    fetch_raw(i, raw);
    samples.assign(raw.begin(), raw.end());
    wall_clock = meta_.wall_clock[i];
    wavelength = meta_.wavelength[i];
}

}  // namespace corrotdr::cli
