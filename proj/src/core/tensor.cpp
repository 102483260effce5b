#include "percvae/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "percvae/error.hpp"

namespace percvae {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::shape: return "shape error";
        case ErrorKind::invalid_support: return "invalid support";
        case ErrorKind::contract: return "contract error";
        case ErrorKind::domain: return "domain error";
        case ErrorKind::parse: return "parse error";
        case ErrorKind::io: return "io error";
        case ErrorKind::config: return "config error";
        case ErrorKind::load: return "load error";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::undefined_metric: return "undefined metric";
        case ErrorKind::invalid_request: return "invalid request";
    }
    return "error";
}

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) fail(ErrorKind::shape, "non-positive dimension in shape " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(shape_size(shape)), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape_size(shape))
        fail(ErrorKind::shape, "data length " + std::to_string(data.size()) + " does not match shape " +
                                   shape_to_string(shape));
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = static_cast<std::int64_t>(values.size());
    return Tensor({n}, std::move(values));
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

std::span<const double> Tensor::row(std::int64_t r) const {
    const auto c = static_cast<std::size_t>(cols());
    return {data.data() + static_cast<std::size_t>(r) * c, c};
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {
// 53-bit uniform in (0, 1); never returns 0 so log() below is safe.
double open_unit(std::mt19937_64& engine) {
    for (;;) {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}
}  // namespace

double SeededSampler::standard_normal() {
    // Box-Muller with a cached spare draw. Written out instead of using
    // std::normal_distribution so sequences are identical across standard libraries.
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = open_unit(engine_);
    const double u2 = open_unit(engine_);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::vector<double> SeededSampler::standard_normal(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = standard_normal();
    return out;
}

double SeededSampler::uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

std::size_t SeededSampler::index_below(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
        const std::uint64_t r = engine_();
        if (r < limit) return static_cast<std::size_t>(r % bound);
    }
}

SeededSampler SeededSampler::split(std::uint64_t stream) const {
    return SeededSampler(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

}  // namespace percvae
