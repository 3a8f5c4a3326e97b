#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sega {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major vector of doubles with shape metadata. Holds latents z_t
/// and every noise estimate derived from them.
class Latent {
public:
    Latent() = default;
    /// Zero-filled latent of the given shape.
    explicit Latent(Shape shape);
    /// One-dimensional latent.
    explicit Latent(std::vector<double> data);
    Latent(std::initializer_list<double> data);
    Latent(std::vector<double> data, Shape shape);

    static Latent zeros_like(const Latent& other) { return Latent(other.shape()); }

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    const Shape& shape() const noexcept { return shape_; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    bool all_finite() const noexcept;

    /// Bitwise equality of shape and every stored double.
    bool bit_equal(const Latent& other) const noexcept;

    friend bool operator==(const Latent&, const Latent&) = default;

private:
    std::vector<double> data_;
    Shape shape_;
};

inline bool bit_equal(const Latent& a, const Latent& b) noexcept { return a.bit_equal(b); }

enum class ElementwiseOp { add, sub, scale, mul };

/// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Latent& a, const Latent& b, const char* what);

Latent elementwise(ElementwiseOp op, const Latent& a, const Latent& b);
/// `add`/`sub` apply the scalar to every entry; `scale`/`mul` multiply.
Latent elementwise(ElementwiseOp op, const Latent& a, double b);

inline Latent add(const Latent& a, const Latent& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Latent sub(const Latent& a, const Latent& b) { return elementwise(ElementwiseOp::sub, a, b); }
inline Latent mul(const Latent& a, const Latent& b) { return elementwise(ElementwiseOp::mul, a, b); }
inline Latent scale(const Latent& a, double s) { return elementwise(ElementwiseOp::scale, a, s); }

Latent abs(const Latent& a);
double l2_norm(std::span<const double> v);
double l2_distance(const Latent& a, const Latent& b);

/// Nearest-rank percentile: the ceil(lambda * n)-th smallest entry (1-based)
/// over all n values. Requires n > 0 and 0 < lambda < 1.
double percentile_threshold(std::span<const double> values, double lambda);
inline double percentile_threshold(const Latent& values, double lambda) {
    return percentile_threshold(values.values(), lambda);
}

/// 1-based rank used by percentile_threshold. Products that land within
/// a few ulps of an integer are treated as that integer, so that decimal
/// lambdas such as 0.95 * 10000 select rank 9500.
std::size_t nearest_rank(std::size_t n, double lambda);

}  // namespace sega
