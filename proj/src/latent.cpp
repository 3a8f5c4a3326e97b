#include "sega/latent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "sega/error.hpp"

namespace sega {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
    for (auto extent : shape) {
        if (extent == 0) throw ShapeError("shape " + shape_to_string(shape) + " has a zero extent");
    }
}

}  // namespace

Latent::Latent(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_product(shape_), 0.0);
}

Latent::Latent(std::vector<double> data) : data_(std::move(data)), shape_{data_.size()} {}

Latent::Latent(std::initializer_list<double> data) : Latent(std::vector<double>(data)) {}

Latent::Latent(std::vector<double> data, Shape shape) : data_(std::move(data)), shape_(std::move(shape)) {
    check_shape(shape_);
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
}

bool Latent::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Latent::bit_equal(const Latent& other) const noexcept {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

Latent elementwise(ElementwiseOp op, const Latent& a, const Latent& b) {
    require_same_shape(a, b, "elementwise");
    Latent out(a);
    auto o = out.values();
    auto y = b.values();
    switch (op) {
        case ElementwiseOp::add:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
            break;
        case ElementwiseOp::sub:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
            break;
        case ElementwiseOp::scale:
        case ElementwiseOp::mul:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
            break;
    }
    return out;
}

Latent elementwise(ElementwiseOp op, const Latent& a, double b) {
    Latent out(a);
    for (double& v : out.values()) {
        switch (op) {
            case ElementwiseOp::add: v += b; break;
            case ElementwiseOp::sub: v -= b; break;
            case ElementwiseOp::scale:
            case ElementwiseOp::mul: v *= b; break;
        }
    }
    return out;
}

Latent abs(const Latent& a) {
    Latent out(a);
    for (double& v : out.values()) v = std::fabs(v);
    return out;
}

double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

double l2_distance(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "l2_distance");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

std::size_t nearest_rank(std::size_t n, double lambda) {
    if (n == 0) throw DomainError("percentile of an empty set");
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw DomainError("percentile lambda must lie in (0,1), got " + std::to_string(lambda));
    }
    const double r = lambda * static_cast<double>(n);
    const double nearest = std::round(r);
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, r);
    const double rank = std::fabs(r - nearest) <= slack ? nearest : std::ceil(r);
    return std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, n);
}

double percentile_threshold(std::span<const double> values, double lambda) {
    const std::size_t k = nearest_rank(values.size(), lambda);
    std::vector<double> scratch(values.begin(), values.end());
    auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
    std::nth_element(scratch.begin(), nth, scratch.end());
    return *nth;
}

}  // namespace sega
