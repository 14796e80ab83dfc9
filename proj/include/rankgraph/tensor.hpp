#pragma once

#include "rankgraph/error.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace rankgraph {

// Dense row-major matrix of 64-bit reals. Plain value type: copyable,
// immutable by convention once handed to a Tape. Finiteness is enforced at
// construction; ops re-check their outputs when the tape runs checked.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {
        check_finite("Tensor()");
    }

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), v_(std::move(values)) {
        if (v_.size() != rows_ * cols_)
            fail_validation("Tensor: value count " + std::to_string(v_.size()) +
                            " != rows*cols " + std::to_string(rows_ * cols_));
        check_finite("Tensor()");
    }

    // Row-of-rows literal, for tests and fixtures.
    Tensor(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        v_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) fail_validation("Tensor: ragged initializer");
            v_.insert(v_.end(), r.begin(), r.end());
        }
        check_finite("Tensor()");
    }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor(1, n, std::move(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    double& at(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double* row_ptr(std::size_t r) { return v_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return v_.data() + r * cols_; }
    const std::vector<double>& values() const { return v_; }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void check_finite(const char* where) const {
        if (!all_finite()) fail_validation(std::string(where) + ": non-finite value in tensor");
    }

    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

inline double dot_rows(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    if (a.cols() != b.cols()) fail_validation("dot_rows: width mismatch");
    const double* pa = a.row_ptr(ra);
    const double* pb = b.row_ptr(rb);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += pa[j] * pb[j];
    return s;
}

inline double row_norm(const Tensor& a, std::size_t r) {
    return std::sqrt(dot_rows(a, r, a, r));
}

// --- RGT1 binary format: magic "RGT1", u32 rows, u32 cols, f64 values (LE) ---

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& out, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    write_u64(out, bits);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("read_u32: truncated input");
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= std::uint32_t(b[i]) << (8 * i);
    return x;
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("read_u64: truncated input");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= std::uint64_t(b[i]) << (8 * i);
    return x;
}

inline double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

}  // namespace detail

inline void write_tensor(std::ostream& out, const Tensor& t) {
    out.write("RGT1", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (double x : t.values()) detail::write_f64(out, x);
}

inline Tensor read_tensor(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGT1", 4) != 0)
        fail_validation("read_tensor: bad magic, expected RGT1");
    std::uint32_t rows = detail::read_u32(in);
    std::uint32_t cols = detail::read_u32(in);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = detail::read_f64(in);
    return Tensor(rows, cols, std::move(v));
}

}  // namespace rankgraph
