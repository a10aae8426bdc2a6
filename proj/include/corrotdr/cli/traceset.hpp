#pragma once

#include "corrotdr/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace corrotdr::cli {

// On-disk layout of a trace set directory:
//   traceset.json  metadata (see TraceSetMeta)
//   traces.f32     trace_count * trace_length little-endian float32, trace-major
//   reference.f32  transmitted burst segment, little-endian float32

inline constexpr const char* kTraceSetFormat = "corrotdr-traceset";
inline constexpr int kTraceSetVersion = 1;

struct TraceSetMeta {
    double sample_rate = 0.0;
    double bit_rate = 0.0;
    int samples_per_bit = 0;
    std::size_t trace_length = 0;
    std::size_t trace_count = 0;
    std::size_t reference_length = 0;
    std::vector<double> wall_clock;   // s, one per trace
    std::vector<double> wavelength;   // nm, one per trace
    std::string config_hash;
    nlohmann::json capture = nlohmann::json::object();
    nlohmann::json ground_truth = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();

    nlohmann::json to_json() const;
    static TraceSetMeta from_json(const nlohmann::json& j);
};

/// Fully loaded trace set; samples are stored exactly as on disk.
struct TraceSet {
    TraceSetMeta meta;
    std::vector<float> reference;
    std::vector<std::vector<float>> traces;
};

/// Streams traces to disk; finish() writes the metadata last so an
/// interrupted run never looks complete.
class TraceSetWriter {
public:
    TraceSetWriter(const std::filesystem::path& dir, TraceSetMeta meta, std::span<const float> reference);
    ~TraceSetWriter();
    TraceSetWriter(const TraceSetWriter&) = delete;
    TraceSetWriter& operator=(const TraceSetWriter&) = delete;

    void append(std::span<const float> samples, double wall_clock, double wavelength);
    void append(std::span<const double> samples, double wall_clock, double wavelength);
    void finish();

private:
    std::filesystem::path dir_;
    TraceSetMeta meta_;
    std::FILE* traces_ = nullptr;
    std::vector<float> scratch_;
};

void write_traceset(const std::filesystem::path& dir, const TraceSet& set);
TraceSet read_traceset(const std::filesystem::path& dir);
TraceSetMeta read_traceset_meta(const std::filesystem::path& dir);

/// Random-access reader over traces.f32; fetch() is safe to call concurrently.
class TraceSetReader final : public TraceSource {
public:
    explicit TraceSetReader(const std::filesystem::path& dir);
    ~TraceSetReader() override;
    TraceSetReader(const TraceSetReader&) = delete;
    TraceSetReader& operator=(const TraceSetReader&) = delete;

    const TraceSetMeta& meta() const { return meta_; }
    const SampledWaveform& reference() const { return reference_; }

    std::size_t count() const override { return meta_.trace_count; }
    double sample_rate() const override { return meta_.sample_rate; }
    void fetch(std::size_t i, std::vector<double>& samples, double& wall_clock, double& wavelength) const override;
    void fetch_raw(std::size_t i, std::vector<float>& samples) const;

private:
    TraceSetMeta meta_;
    SampledWaveform reference_;
    int fd_ = -1;
};

}  // namespace corrotdr::cli
