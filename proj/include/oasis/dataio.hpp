#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "oasis/linalg.hpp"

namespace oasis {

/// Labelled binary classification data, labels in {-1, +1}.
struct Dataset {
  CsrMatrix x;
  DenseVector y;
  std::string name;
  std::size_t declared_features = 0;  // expected_dim given to the parser
  std::size_t observed_features = 0;  // largest index seen in the file

  std::size_t rows() const { return x.rows(); }
  std::size_t features() const { return x.cols(); }
  /// 1 - nnz / (n d)
  double sparsity() const;
};

/// Syntax or content error in a LIBSVM file; line numbers start at 1.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parses "label idx:val idx:val ..." lines with 1-based, strictly
/// increasing indices. Labels in {0,1}, {1,2} or {-1,+1} are normalised to
/// {-1,+1}. The column count is max(largest index, expected_dim).
Dataset parse_libsvm(std::istream& in,
                     std::optional<std::size_t> expected_dim = std::nullopt,
                     std::string name = {});

/// Reads a file; names ending in ".gz" are decompressed with zlib.
Dataset load_libsvm(const std::filesystem::path& path,
                    std::optional<std::size_t> expected_dim = std::nullopt);

/// Writes +1/-1 labels and 1-based indices with 17 significant digits.
void write_libsvm(std::ostream& out, const Dataset& ds);

/// Pads both datasets to the larger feature count.
void align_features(Dataset& a, Dataset& b);

/// Shuffles rows and puts the first ceil(fraction * n) into the training set.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                             double fraction, Rng& rng);

/// Two Gaussian clouds N(+-separation u, I) for a random unit u, labels
/// drawn with equal probability; each entry is then kept with probability
/// `sparsity` (1 keeps everything).
Dataset synth_classification(std::size_t n, std::size_t d, double sparsity,
                             double separation, Rng& rng);

}  // namespace oasis
