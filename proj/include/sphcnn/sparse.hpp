#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace sphcnn {

struct Triplet {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

/// Compressed-sparse-row real matrix. Column indices are strictly
/// increasing within each row; entries with |value| <= drop tolerance are
/// not stored, so sparsity patterns are reproducible.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

    static constexpr double kDropTolerance = 1e-14;

    /// Duplicate (row,col) entries are summed before the drop tolerance is
    /// applied.
    static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> triplets,
                                      double drop_tol = kDropTolerance);
    static SparseMatrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t nnz() const { return static_cast<std::int64_t>(values_.size()); }

    const std::vector<int>& offsets() const { return offsets_; }
    const std::vector<int>& indices() const { return indices_; }
    const std::vector<double>& values() const { return values_; }

    int row_nnz(int row) const { return offsets_[row + 1] - offsets_[row]; }

    /// y = A x  (x has cols() entries, y has rows() entries)
    void multiply(const double* x, double* y) const;
    std::vector<double> multiply(const std::vector<double>& x) const;

    /// Y = A X for `count` right-hand sides stored as rows of X
    /// (X is count x cols, Y is count x rows, both row-major).
    void multiply_rows(const double* x, double* y, int count) const;

    SparseMatrix transposed() const;

    double coeff(int row, int col) const;
    std::vector<double> to_dense() const;  // row-major rows() x cols()

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<int> offsets_{0};
    std::vector<int> indices_;
    std::vector<double> values_;
};

// MatrixMarket coordinate format (1-based, "%%MatrixMarket matrix
// coordinate real general"), for cross-checking operators in external
// tools.
void write_matrix_market(const SparseMatrix& m, std::ostream& out);
SparseMatrix read_matrix_market(std::istream& in);

}  // namespace sphcnn
