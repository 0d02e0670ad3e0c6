#include "sphcnn/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sphcnn {

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> triplets,
                                         double drop_tol) {
    for (const auto& t : triplets) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
            throw std::out_of_range("SparseMatrix::from_triplets: index out of range");
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix m(rows, cols);
    std::size_t i = 0;
    for (int r = 0; r < rows; ++r) {
        while (i < triplets.size() && triplets[i].row == r) {
            int c = triplets[i].col;
            double v = 0.0;
            while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c)
                v += triplets[i++].value;
            if (std::abs(v) > drop_tol) {
                m.indices_.push_back(c);
                m.values_.push_back(v);
            }
        }
        m.offsets_[r + 1] = static_cast<int>(m.values_.size());
    }
    return m;
}

SparseMatrix SparseMatrix::identity(int n) {
    SparseMatrix m(n, n);
    m.indices_.resize(n);
    m.values_.assign(n, 1.0);
    for (int i = 0; i < n; ++i) {
        m.indices_[i] = i;
        m.offsets_[i + 1] = i + 1;
    }
    return m;
}

void SparseMatrix::multiply(const double* x, double* y) const {
    for (int r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int k = offsets_[r]; k < offsets_[r + 1]; ++k) acc += values_[k] * x[indices_[k]];
        y[r] = acc;
    }
}

std::vector<double> SparseMatrix::multiply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != cols_)
        throw std::invalid_argument("SparseMatrix::multiply: size mismatch");
    std::vector<double> y(rows_);
    multiply(x.data(), y.data());
    return y;
}

void SparseMatrix::multiply_rows(const double* x, double* y, int count) const {
    for (int i = 0; i < count; ++i)
        multiply(x + static_cast<std::size_t>(i) * cols_, y + static_cast<std::size_t>(i) * rows_);
}

SparseMatrix SparseMatrix::transposed() const {
    SparseMatrix t(cols_, rows_);
    std::vector<int> counts(cols_, 0);
    for (int idx : indices_) ++counts[idx];
    for (int c = 0; c < cols_; ++c) t.offsets_[c + 1] = t.offsets_[c] + counts[c];
    t.indices_.resize(values_.size());
    t.values_.resize(values_.size());
    std::vector<int> cursor(t.offsets_.begin(), t.offsets_.end() - 1);
    for (int r = 0; r < rows_; ++r) {
        for (int k = offsets_[r]; k < offsets_[r + 1]; ++k) {
            int pos = cursor[indices_[k]]++;
            t.indices_[pos] = r;
            t.values_[pos] = values_[k];
        }
    }
    return t;
}

double SparseMatrix::coeff(int row, int col) const {
    for (int k = offsets_[row]; k < offsets_[row + 1]; ++k)
        if (indices_[k] == col) return values_[k];
    return 0.0;
}

std::vector<double> SparseMatrix::to_dense() const {
    std::vector<double> d(static_cast<std::size_t>(rows_) * cols_, 0.0);
    for (int r = 0; r < rows_; ++r)
        for (int k = offsets_[r]; k < offsets_[r + 1]; ++k)
            d[static_cast<std::size_t>(r) * cols_ + indices_[k]] = values_[k];
    return d;
}

void write_matrix_market(const SparseMatrix& m, std::ostream& out) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << " " << m.cols() << " " << m.nnz() << "\n";
    out.precision(17);
    for (int r = 0; r < m.rows(); ++r) {
        for (int k = m.offsets()[r]; k < m.offsets()[r + 1]; ++k)
            out << r + 1 << " " << m.indices()[k] + 1 << " " << m.values()[k] << "\n";
    }
}

SparseMatrix read_matrix_market(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
        throw std::runtime_error("matrix market: missing header");
    if (line.find("coordinate") == std::string::npos ||
        line.find("general") == std::string::npos)
        throw std::runtime_error("matrix market: unsupported format: " + line);
    while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
    }
    std::istringstream hs(line);
    int rows, cols;
    std::int64_t nnz;
    if (!(hs >> rows >> cols >> nnz)) throw std::runtime_error("matrix market: bad size line");
    std::vector<Triplet> triplets;
    triplets.reserve(nnz);
    for (std::int64_t i = 0; i < nnz; ++i) {
        Triplet t;
        if (!(in >> t.row >> t.col >> t.value))
            throw std::runtime_error("matrix market: truncated entries");
        --t.row;
        --t.col;
        triplets.push_back(t);
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(triplets), 0.0);
}

}  // namespace sphcnn
