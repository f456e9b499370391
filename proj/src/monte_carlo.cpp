#include "oswitch/monte_carlo.hpp"

#include <cmath>

namespace oswitch {

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

McStats summarize(const std::vector<double>& samples) {
    McStats out;
    out.count = static_cast<std::int64_t>(samples.size());
    if (samples.empty()) return out;
    CompensatedSum sum;
    for (double v : samples) sum.add(v);
    out.mean = sum.value() / static_cast<double>(out.count);
    CompensatedSum sq;
    for (double v : samples) sq.add((v - out.mean) * (v - out.mean));
    if (out.count > 1) {
        const double var = sq.value() / static_cast<double>(out.count - 1);
        out.std_error = std::sqrt(var / static_cast<double>(out.count));
    }
    return out;
}

}  // namespace oswitch
