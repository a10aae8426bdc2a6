#pragma once

#include <cstdint>
#include <random>

namespace corrotdr {

/// SplitMix64 finalizer over (seed, stream); gives independent, reproducible
/// per-trace generator seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class NormalSource {
public:
    explicit NormalSource(double sigma) : dist_(0.0, sigma) {}

    template <class Engine>
    double operator()(Engine& eng)
    {
        return dist_(eng);
    }

private:
    std::normal_distribution<double> dist_;
};

}  // namespace corrotdr
