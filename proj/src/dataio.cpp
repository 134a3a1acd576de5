#include "oasis/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <fmt/format.h>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <vector>

namespace oasis {

namespace {

// Candidate label schemes, narrowed as labels are read.
enum Scheme : unsigned { kPlusMinus = 1, kZeroOne = 2, kOneTwo = 4 };

unsigned schemes_containing(double label) {
  unsigned m = 0;
  if (label == -1.0 || label == 1.0) m |= kPlusMinus;
  if (label == 0.0 || label == 1.0) m |= kZeroOne;
  if (label == 1.0 || label == 2.0) m |= kOneTwo;
  return m;
}

double normalise_label(double label, unsigned scheme) {
  if (scheme & kPlusMinus) return label;
  if (scheme & kZeroOne) return label == 0.0 ? -1.0 : 1.0;
  return label == 1.0 ? -1.0 : 1.0;
}

bool parse_double(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size() && errno != ERANGE &&
         std::isfinite(out);
}

bool parse_index(const std::string& tok, std::size_t& out) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
        return std::isdigit(c);
      }))
    return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (errno == ERANGE) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

std::string read_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string out;
  std::vector<char> buf(1 << 16);
  int got = 0;
  while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0)
    out.append(buf.data(), static_cast<std::size_t>(got));
  int err = 0;
  const char* msg = gzerror(f, &err);
  const std::string detail = msg ? msg : "";
  gzclose(f);
  if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
    throw std::runtime_error("gzip read failed for " + path.string() + ": " +
                             detail);
  return out;
}

}  // namespace

double Dataset::sparsity() const {
  const double cells = static_cast<double>(rows()) *
                       static_cast<double>(features());
  return cells > 0 ? 1.0 - static_cast<double>(x.nnz()) / cells : 0.0;
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what),
      line_(line) {}

Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> expected_dim,
                     std::string name) {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  std::vector<double> raw_labels;
  unsigned schemes = kPlusMinus | kZeroOne | kOneTwo;
  std::size_t max_index = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank line

    double label = 0.0;
    if (!parse_double(tok, label))
      throw ParseError(lineno, "invalid label '" + tok + "'");
    schemes &= schemes_containing(label);
    if (schemes == 0)
      throw ParseError(lineno, "label '" + tok +
                                   "' does not fit a {-1,+1}, {0,1} or {1,2} "
                                   "label scheme");
    raw_labels.push_back(label);

    std::size_t prev = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw ParseError(lineno, "malformed token '" + tok + "'");
      std::size_t idx = 0;
      double val = 0.0;
      if (!parse_index(tok.substr(0, colon), idx) || idx == 0)
        throw ParseError(lineno, "invalid feature index in '" + tok + "'");
      if (!parse_double(tok.substr(colon + 1), val))
        throw ParseError(lineno, "non-numeric value in '" + tok + "'");
      if (idx == prev)
        throw ParseError(lineno, "duplicate feature index " +
                                     std::to_string(idx));
      if (idx < prev)
        throw ParseError(lineno, "feature indices must increase (" +
                                     std::to_string(idx) + " after " +
                                     std::to_string(prev) + ")");
      prev = idx;
      max_index = std::max(max_index, idx);
      cols.push_back(idx - 1);
      vals.push_back(val);
    }
    offsets.push_back(vals.size());
  }
  if (in.bad()) throw std::runtime_error("read error while parsing LIBSVM data");

  Dataset ds;
  ds.name = std::move(name);
  ds.observed_features = max_index;
  ds.declared_features = expected_dim.value_or(0);
  const std::size_t d = std::max(max_index, ds.declared_features);
  const std::size_t n = raw_labels.size();
  ds.x = CsrMatrix(n, d, std::move(offsets), std::move(cols), std::move(vals));
  ds.y.reserve(n);
  for (double l : raw_labels) ds.y.push_back(normalise_label(l, schemes));
  return ds;
}

Dataset load_libsvm(const std::filesystem::path& path,
                    std::optional<std::size_t> expected_dim) {
  const std::string name = path.filename().string();
  if (path.extension() == ".gz") {
    std::istringstream in(read_gzip(path));
    return parse_libsvm(in, expected_dim, name);
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_libsvm(in, expected_dim, name);
}

void write_libsvm(std::ostream& out, const Dataset& ds) {
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    out << (ds.y[r] > 0 ? "+1" : "-1");
    auto c = ds.x.row_cols(r);
    auto v = ds.x.row_values(r);
    for (std::size_t p = 0; p < c.size(); ++p)
      out << ' ' << (c[p] + 1) << ':' << fmt::format("{:.17g}", v[p]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed");
}

void align_features(Dataset& a, Dataset& b) {
  const std::size_t d = std::max(a.features(), b.features());
  a.x = a.x.with_cols(d);
  b.x = b.x.with_cols(d);
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                             double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("train_test_split: fraction must lie in (0,1)");
  const std::size_t n = ds.rows();
  const auto n_train = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    throw std::invalid_argument("train_test_split: split leaves an empty side");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<std::size_t>(rng.below(i + 1))]);

  auto take = [&](std::span<const std::size_t> idx, const std::string& suffix) {
    Dataset part;
    part.x = ds.x.select_rows(idx);
    part.y.reserve(idx.size());
    for (std::size_t r : idx) part.y.push_back(ds.y[r]);
    part.name = ds.name + suffix;
    part.declared_features = ds.declared_features;
    part.observed_features = ds.observed_features;
    return part;
  };
  std::span<const std::size_t> all(perm);
  return {take(all.first(n_train), ".train"),
          take(all.subspan(n_train), ".test")};
}

Dataset synth_classification(std::size_t n, std::size_t d, double sparsity,
                             double separation, Rng& rng) {
  if (n == 0 || d == 0)
    throw std::invalid_argument("synth_classification: n and d must be >= 1");
  if (!(sparsity > 0.0 && sparsity <= 1.0))
    throw std::invalid_argument("synth_classification: sparsity in (0, 1]");
  DenseVector u = standard_normal(d, rng);
  const double nu = norm2(u);
  for (double& x : u) x /= nu;

  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  Dataset ds;
  ds.y.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double label = rng.uniform() < 0.5 ? -1.0 : 1.0;
    ds.y.push_back(label);
    for (std::size_t j = 0; j < d; ++j) {
      const double x = label * separation * u[j] + rng.normal();
      if (sparsity < 1.0 && rng.uniform() >= sparsity) continue;
      if (x == 0.0) continue;
      cols.push_back(j);
      vals.push_back(x);
    }
    offsets.push_back(vals.size());
  }
  ds.x = CsrMatrix(n, d, std::move(offsets), std::move(cols), std::move(vals));
  ds.name = fmt::format("synth-n{}-d{}", n, d);
  ds.declared_features = d;
  ds.observed_features = d;
  return ds;
}

}  // namespace oasis
