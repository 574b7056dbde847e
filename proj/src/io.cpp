#include "ltsoups/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ltsoups/error.hpp"

namespace ltsoups {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const auto bits = std::bit_cast<U>(value);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in, const char* what) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) fail(Errc::format_error, std::string("truncated file while reading ") + what);
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) fail(Errc::format_error, std::string("missing ") + magic + " magic");
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  return out;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

}  // namespace

void write_ltds(std::ostream& out, const Dataset& data) {
  out.write("LTDS", 4);
  put<std::uint32_t>(out, kLtdsVersion);
  put<std::uint64_t>(out, data.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.num_classes()));
  const Matrix& x = data.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) put<double>(out, x(i, j));
  for (int y : data.labels()) put<std::uint32_t>(out, static_cast<std::uint32_t>(y));
}

Dataset read_ltds(std::istream& in) {
  expect_magic(in, "LTDS");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kLtdsVersion) fail(Errc::format_error, "unsupported LTDS version " + std::to_string(version));
  const auto n = get<std::uint64_t>(in, "N");
  const auto d = get<std::uint32_t>(in, "d");
  const auto k = get<std::uint32_t>(in, "K");
  if (k == 0) fail(Errc::format_error, "LTDS header declares zero classes");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = get<double>(in, "features");
  std::vector<int> y(n);
  for (auto& label : y) {
    const auto v = get<std::uint32_t>(in, "labels");
    if (v >= k) fail(Errc::format_error, "label " + std::to_string(v) + " >= K");
    label = static_cast<int>(v);
  }
  return Dataset(std::move(x), std::move(y), static_cast<int>(k));
}

void save_ltds(const std::filesystem::path& path, const Dataset& data) {
  auto out = open_out(path);
  write_ltds(out, data);
  finish(out, path);
}

Dataset load_ltds(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_ltds(in);
}

void write_ltwt(std::ostream& out, const Checkpoint& ckpt) {
  const auto& m = ckpt.weights;
  out.write("LTWT", 4);
  put<std::uint32_t>(out, kLtwtVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.layout().num_linear()));
  for (const auto& s : m.layout().shapes()) {
    put<std::uint32_t>(out, s.rows);
    put<std::uint32_t>(out, s.cols);
  }
  for (Eigen::Index i = 0; i < m.flat().size(); ++i) put<double>(out, m.flat()[i]);
  put<std::uint64_t>(out, ckpt.meta.seed);
  put<double>(out, ckpt.meta.subset_rho);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.meta.loss));
}

Checkpoint read_ltwt(std::istream& in) {
  expect_magic(in, "LTWT");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kLtwtVersion) fail(Errc::format_error, "unsupported LTWT version " + std::to_string(version));
  const auto layers = get<std::uint32_t>(in, "layer count");
  if (layers == 0 || layers > 1024) fail(Errc::format_error, "implausible layer count");
  std::vector<TensorShape> shapes(2 * static_cast<std::size_t>(layers) + 2);
  for (auto& s : shapes) {
    s.rows = get<std::uint32_t>(in, "tensor rows");
    s.cols = get<std::uint32_t>(in, "tensor cols");
  }
  const Layout layout = Layout::from_shapes(shapes);
  BackboneConfig cfg;
  cfg.dim = static_cast<int>(shapes[0].cols);
  cfg.hidden.clear();
  for (std::uint32_t l = 0; l + 1 < layers; ++l) cfg.hidden.push_back(static_cast<int>(shapes[2 * l].rows));
  Checkpoint ckpt;
  ckpt.weights = ModelWeights(cfg, static_cast<int>(shapes[shapes.size() - 2].rows));
  for (Eigen::Index i = 0; i < ckpt.weights.flat().size(); ++i) ckpt.weights.flat()[i] = get<double>(in, "weights");
  if (!ckpt.weights.all_finite()) fail(Errc::format_error, "checkpoint contains non-finite weights");
  ckpt.meta.seed = get<std::uint64_t>(in, "seed");
  ckpt.meta.subset_rho = get<double>(in, "subset rho");
  const auto tag = get<std::uint8_t>(in, "loss tag");
  if (tag > 2) fail(Errc::format_error, "unknown loss tag " + std::to_string(tag));
  ckpt.meta.loss = static_cast<LossKind>(tag);
  return ckpt;
}

void save_ltwt(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto out = open_out(path);
  write_ltwt(out, ckpt);
  finish(out, path);
}

Checkpoint load_ltwt(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_ltwt(in);
}

}  // namespace ltsoups
