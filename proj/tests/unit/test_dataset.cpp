#include "doctest.h"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "nngpnas/dataset.hpp"

using namespace nngpnas;
using testutil::code_of;

namespace {

std::vector<std::uint8_t> two_records() {
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes);
  bytes[0] = 3;
  bytes[kCifarRecordBytes] = 9;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 3072; ++i) bytes[r * kCifarRecordBytes + 1 + i] = static_cast<std::uint8_t>((i * 7 + r * 13) % 256);
  return bytes;
}

}  // namespace

TEST_CASE("cifar record round-trip") {
  const auto bytes = two_records();
  const RawImages img = parse_cifar_batch(bytes);
  REQUIRE(img.size() == 2);
  CHECK(img.labels == std::vector<int>{3, 9});
  for (std::size_t r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p)
        REQUIRE(img.pixels[r * 3072 + p * 3 + c] == bytes[r * kCifarRecordBytes + 1 + c * 1024 + p]);
  CHECK(parse_cifar_batch(std::span<const std::uint8_t>{}).size() == 0);
}

TEST_CASE("cifar errors") {
  auto bytes = two_records();
  bytes.pop_back();
  CHECK(code_of([&] { parse_cifar_batch(bytes); }) == ErrorCode::TruncatedFile);
  auto bad = two_records();
  bad[kCifarRecordBytes] = 10;
  CHECK(code_of([&] { parse_cifar_batch(bad); }) == ErrorCode::LabelOutOfRange);
  CHECK(code_of([] { load_cifar("/nonexistent/cifar"); }) == ErrorCode::IoError);
}

TEST_CASE("load_cifar reads all batches") {
  const auto dir = std::filesystem::temp_directory_path() / "nngpnas_cifar_test";
  std::filesystem::create_directories(dir);
  const auto bytes = two_records();
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                           "data_batch_5.bin", "test_batch.bin"}) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const CifarData data = load_cifar(dir);
  CHECK(data.train.size() == 10);
  CHECK(data.test.size() == 2);
  CHECK(data.train.labels[8] == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("standardize") {
  RawImages img;
  img.height = 1;
  img.width = 2;
  img.pixels = {255, 0, 0, 10, 20, 30};
  img.labels = {0};
  const Tensor t = standardize(img);
  CHECK(t.data[0] == doctest::Approx(2.0587301587301585).epsilon(1e-15));
  CHECK(t.data[1] == doctest::Approx(-123.0 / 62.1).epsilon(1e-15));

  // the channel means map to zero
  const std::vector<double> ones{1.0, 1.0, 1.0};
  const std::vector<double> mean(kCifarChannelMean.begin(), kCifarChannelMean.end());
  RawImages m;
  m.height = m.width = 1;
  m.pixels = {125, 123, 113};
  m.labels = {0};
  const Tensor z = standardize(m, mean, ones);
  CHECK(z.data[0] == doctest::Approx(-0.3));
  CHECK(z.data[1] == 0.0);

  // affine: differences scale by 1/std
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(t.data[i] - t.data[i + 3] ==
          doctest::Approx((double(img.pixels[i]) - double(img.pixels[i + 3])) / kCifarChannelStd[i]).epsilon(1e-13));

  const std::vector<double> two{1.0, 2.0};
  CHECK(code_of([&] { standardize(img, two, two); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("subsample_balanced") {
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back((i * 7) % 10);
  const auto a = subsample_balanced(labels, 10, 100, 5);
  CHECK(a.size() == 100);
  std::map<int, int> hist;
  for (auto i : a) ++hist[labels[i]];
  for (int c = 0; c < 10; ++c) CHECK(hist[c] == 10);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(subsample_balanced(labels, 10, 100, 5) == a);
  CHECK(subsample_balanced(labels, 10, 100, 6) != a);

  const auto b = subsample_balanced(labels, 10, 97, 1);
  hist.clear();
  for (auto i : b) ++hist[labels[i]];
  for (int c = 0; c < 10; ++c) {
    CHECK(hist[c] >= 9);
    CHECK(hist[c] <= 10);
  }
  CHECK(subsample_balanced(labels, 10, 1000, 1).size() == 1000);
  CHECK(subsample_balanced(labels, 10, 0, 1).empty());

  CHECK(code_of([&] { subsample_balanced(labels, 10, 1001, 1); }) == ErrorCode::InsufficientClassSamples);
  std::vector<int> skewed(50, 0);
  skewed.push_back(1);
  CHECK(code_of([&] { subsample_balanced(skewed, 2, 10, 1); }) == ErrorCode::InsufficientClassSamples);
  CHECK(code_of([&] { subsample_balanced(skewed, 1, 10, 1); }) == ErrorCode::LabelOutOfRange);
  CHECK(code_of([&] { subsample_balanced(skewed, 0, 10, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("make_synthetic") {
  const LabeledSet s = make_synthetic(3, 4, 5, 2.0, 9);
  CHECK(s.size() == 15);
  CHECK(s.inputs.shape == TensorShape{1, 1, 4});
  CHECK(s.labels[4] == 1);
  CHECK(make_synthetic(3, 4, 5, 2.0, 9).inputs.data == s.inputs.data);
  CHECK(make_synthetic(3, 4, 5, 2.0, 10).inputs.data != s.inputs.data);

  // two classes are antipodal: the class-mean sum is near zero, its difference near 2 * separation
  const LabeledSet two = make_synthetic(2, 1, 20000, 2.0, 1);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < two.size(); ++i) (two.labels[i] == 0 ? m0 : m1) += two.inputs.data[i];
  m0 /= 20000;
  m1 /= 20000;
  CHECK(std::abs(std::abs(m0) - 2.0) < 0.03);
  CHECK(std::abs(m0 + m1) < 0.03);

  // the sign rule reaches the Bayes rate
  int correct = 0;
  for (std::size_t i = 0; i < two.size(); ++i) correct += ((two.inputs.data[i] * m0 > 0) == (two.labels[i] == 0));
  CHECK(std::abs(correct / 40000.0 - synthetic_two_class_bayes_rate(2.0)) < 0.005);

  CHECK(synthetic_two_class_bayes_rate(2.0) == doctest::Approx(0.9772498680518208).epsilon(1e-14));
  CHECK(synthetic_two_class_bayes_rate(0.0) == 0.5);

  CHECK(code_of([] { make_synthetic(0, 1, 1, 1.0, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { make_synthetic(2, 0, 1, 1.0, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("subset and reshape") {
  const LabeledSet s = make_synthetic(2, 12, 3, 1.0, 4);
  const std::vector<std::size_t> rows{4, 1};
  const LabeledSet sub = s.subset(rows);
  CHECK(sub.labels == std::vector<int>{0, 1});
  CHECK(sub.inputs.data[0] == s.inputs.data[4 * 12]);
  const LabeledSet img = reshape_inputs(s, {2, 2, 3});
  CHECK(img.inputs.shape == TensorShape{2, 2, 3});
  CHECK(img.inputs.data == s.inputs.data);
  CHECK(code_of([&] { reshape_inputs(s, {2, 2, 2}); }) == ErrorCode::ShapeMismatch);
}
