#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oasis/dataio.hpp"
#include "oasis/problems.hpp"

using namespace oasis;

namespace {

Dataset parse(const std::string& text,
              std::optional<std::size_t> dim = std::nullopt) {
  std::istringstream in(text);
  return parse_libsvm(in, dim);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::vector<std::string> row_strings(const Dataset& ds) {
  std::vector<std::string> rows;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    std::string s = std::to_string(ds.y[r]);
    for (std::size_t k = 0; k < ds.x.row_cols(r).size(); ++k)
      s += " " + std::to_string(ds.x.row_cols(r)[k]) + ":" +
           std::to_string(ds.x.row_values(r)[k]);
    rows.push_back(s);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("single lines") {
  const Dataset a = parse("+1 1:0.5 3:2.0\n");
  CHECK(a.y == DenseVector{1});
  CHECK(a.features() == 3);
  CHECK(a.x.to_dense() == DenseVector{0.5, 0, 2.0});

  const Dataset e = parse("-1\n");
  CHECK(e.rows() == 1);
  CHECK(e.x.nnz() == 0);
  CHECK(e.y == DenseVector{-1});

  CHECK(error_line("1 2:abc\n") == 1);
}

TEST_CASE("label schemes") {
  CHECK(parse("0 1:1\n1 1:1\n").y == DenseVector{-1, 1});
  CHECK(parse("1 1:1\n2 1:1\n").y == DenseVector{-1, 1});
  CHECK(parse("-1 1:1\n+1 1:1\n").y == DenseVector{-1, 1});
  CHECK(parse("1 1:1\n1 2:1\n").y == DenseVector{1, 1});
  CHECK(error_line("1 1:1\n3 1:1\n") == 2);
  CHECK(error_line("0 1:1\n2 1:1\n") == 2);
  CHECK(error_line("0.5 1:1\n") == 1);
}

TEST_CASE("malformed input reports the line") {
  CHECK(error_line("1 1:1\n1 3:1 2:1\n") == 2);   // decreasing index
  CHECK(error_line("1 1:1\n\n1 2:1 2:5\n") == 3); // duplicate index
  CHECK(error_line("1 0:1\n") == 1);              // 1-based
  CHECK(error_line("1 1:1\n-1 1:1 x\n") == 2);    // missing colon
  CHECK(error_line("1 1:1\n-1 1:\n") == 2);       // missing value
  CHECK(error_line("abc 1:1\n") == 1);            // bad label
  CHECK(error_line("1 a:1\n") == 1);              // bad index
  try {
    parse("1 1:1\n1 2:abc\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("whitespace, blank lines and dimensions") {
  const Dataset d = parse("\n  +1\t1:1   4:2 \n\n-1 2:3\n", 6);
  CHECK(d.rows() == 2);
  CHECK(d.features() == 6);
  CHECK(d.declared_features == 6);
  CHECK(d.observed_features == 4);
  CHECK(d.sparsity() == doctest::Approx(1.0 - 3.0 / 12.0));
  CHECK(parse("1 5:1\n", 2).features() == 5);
}

TEST_CASE("round trip keeps the structure") {
  const std::string fixture =
      "+1 1:0.5 3:2\n"
      "-1\n"
      "+1 2:-1e-3 7:0.30000000000000004\n"
      "-1 4:1e300 5:-2.5\n";
  const Dataset a = parse(fixture);
  std::ostringstream out;
  write_libsvm(out, a);
  const Dataset b = parse(out.str(), a.features());
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  std::ostringstream again;
  write_libsvm(again, b);
  CHECK(again.str() == out.str());
}

TEST_CASE("random round trips") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Dataset ds = synth_classification(15, 9, 0.3, 1.0, rng);
    std::ostringstream out;
    write_libsvm(out, ds);
    const Dataset back = parse(out.str(), ds.features());
    CHECK(back.x == ds.x);
    CHECK(back.y == ds.y);
  }
}

TEST_CASE("gzip input") {
  const auto dir = std::filesystem::temp_directory_path() / "oasis_dataio_test";
  std::filesystem::create_directories(dir);
  const std::string text = "+1 1:0.5 3:2\n-1 2:1\n";
  const auto plain = dir / "d.txt";
  const auto packed = dir / "d.txt.gz";
  std::ofstream(plain) << text;
  gzFile gz = gzopen(packed.string().c_str(), "wb");
  REQUIRE(gz != nullptr);
  gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
  gzclose(gz);
  const Dataset a = load_libsvm(plain), b = load_libsvm(packed);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK_THROWS(load_libsvm(dir / "missing.txt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("feature alignment") {
  Dataset a = parse("1 2:1\n"), b = parse("1 5:1\n");
  align_features(a, b);
  CHECK(a.features() == 5);
  CHECK(b.features() == 5);
}

TEST_CASE("train/test split") {
  const Dataset ds = parse("1 1:1\n-1 1:2\n1 1:3\n-1 1:4\n");
  Rng r1(5), r2(5);
  const auto [train, test] = train_test_split(ds, 0.75, r1);
  CHECK(train.rows() == 3);
  CHECK(test.rows() == 1);
  const auto [train2, test2] = train_test_split(ds, 0.75, r2);
  CHECK(train.x == train2.x);
  CHECK(test.y == test2.y);

  std::vector<std::string> rows = row_strings(train);
  for (const auto& s : row_strings(test)) rows.push_back(s);
  std::sort(rows.begin(), rows.end());
  CHECK(rows == row_strings(ds));

  Rng r3(1);
  CHECK_THROWS(train_test_split(ds, 0.0, r3));
  CHECK_THROWS(train_test_split(ds, 1.0, r3));
  CHECK_THROWS(train_test_split(parse("1 1:1\n"), 0.5, r3));
}

TEST_CASE("synthetic data") {
  Rng rng(8);
  const Dataset dense = synth_classification(50, 7, 1.0, 1.0, rng);
  CHECK(dense.x.nnz() == 50 * 7);
  CHECK(dense.sparsity() == 0.0);
  for (double y : dense.y) CHECK((y == 1.0 || y == -1.0));

  const Dataset sparse = synth_classification(400, 20, 0.1, 1.0, rng);
  CHECK(std::abs(sparse.sparsity() - 0.9) < 0.03);

  Rng a(4), b(4);
  const Dataset d1 = synth_classification(30, 3, 0.5, 2.0, a);
  const Dataset d2 = synth_classification(30, 3, 0.5, 2.0, b);
  CHECK(d1.x == d2.x);
  CHECK(d1.y == d2.y);
}

TEST_CASE("separation controls learnability") {
  Rng rng(10);
  const Dataset sep = synth_classification(500, 10, 1.0, 10.0, rng);
  Rng split_rng(11);
  const auto [train, test] = train_test_split(sep, 0.75, split_rng);
  // Fit by plain gradient descent on the regularised logistic loss.
  LogisticRegression f(train.x, train.y, 1e-3);
  DenseVector w(10, 0.0);
  for (int k = 0; k < 300; ++k) axpy(-1.0, f.gradient(w), w);
  CHECK(classification_accuracy(test.x, test.y, w) >= 0.95);

  // With no separation the labels carry no signal.
  Rng r0(12);
  const Dataset noise = synth_classification(4000, 10, 1.0, 0.0, r0);
  Rng s0(13);
  const auto [ntrain, ntest] = train_test_split(noise, 0.5, s0);
  LogisticRegression g(ntrain.x, ntrain.y, 1e-3);
  DenseVector v(10, 0.0);
  for (int k = 0; k < 100; ++k) axpy(-1.0, g.gradient(v), v);
  CHECK(std::abs(classification_accuracy(ntest.x, ntest.y, v) - 0.5) < 0.05);
}
