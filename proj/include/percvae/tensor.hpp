#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace percvae {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles. Vectors are rank 1, matrices rank 2.
/// `grad` is either empty or has exactly `data.size()` entries.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    static Tensor vector(std::vector<double> values);

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::int64_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

    double& operator()(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
    double operator()(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

    void zero_grad();
    std::span<const double> row(std::int64_t r) const;
};

/// Deterministic random source. Two samplers built from the same seed yield the
/// same sequence of draws.
class SeededSampler {
public:
    explicit SeededSampler(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    double standard_normal();
    std::vector<double> standard_normal(std::size_t n);
    double uniform(double lo, double hi);
    std::uint64_t next_u64() { return engine_(); }

    /// Unbiased index in [0, n).
    std::size_t index_below(std::size_t n);

    /// Sampler for stream `stream`, derived deterministically from this sampler's seed.
    SeededSampler split(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace percvae
