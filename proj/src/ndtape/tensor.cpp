#include "veegan/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

namespace veegan::nd {

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

namespace {

constexpr std::size_t kPooledMinBytes = 4096;
constexpr std::size_t kMaxPerSize = 512;

struct BufferPool {
    std::unordered_map<std::size_t, std::vector<void*>> free;
    ~BufferPool() {
        for (auto& [bytes, list] : free)
            for (void* p : list) ::operator delete(p);
    }
};

BufferPool& pool() {
    thread_local BufferPool p;
    return p;
}

}  // namespace

void* buffer_alloc(std::size_t bytes) {
    if (bytes >= kPooledMinBytes) {
        auto& list = pool().free[bytes];
        if (!list.empty()) {
            void* p = list.back();
            list.pop_back();
            return p;
        }
    }
    return ::operator new(bytes);
}

void buffer_free(void* p, std::size_t bytes) noexcept {
    if (p == nullptr) return;
    if (bytes >= kPooledMinBytes) {
        try {
            auto& list = pool().free[bytes];
            if (list.size() < kMaxPerSize) {
                list.push_back(p);
                return;
            }
        } catch (...) {
        }
    }
    ::operator delete(p);
}

}  // namespace detail

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor Tensor::uninitialized(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(shape_numel(t.shape_));
    return t;
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
        if (r.size() != m) throw ShapeError("Tensor::from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({n, m}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("Tensor::item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("Tensor::reshaped: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    Shape s(shape_.begin() + 1, shape_.end());
    Tensor t = uninitialized(std::move(s));
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * c), c, t.data_.begin());
    return t;
}

bool Tensor::all_finite() const noexcept {
    // x - x is NaN exactly when x is NaN or infinite.
    const Eigen::Map<const Eigen::ArrayXd> x(data_.data(), static_cast<Eigen::Index>(data_.size()));
    return (x - x).sum() == 0.0;
}

bool operator==(const Tensor& a, const Tensor& b) noexcept { return a.shape_ == b.shape_ && a.data_ == b.data_; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace veegan::nd
