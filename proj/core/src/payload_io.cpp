#include "fedlpa/payload_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "fedlpa/errors.hpp"

namespace fedlpa {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'F', 'L', 'P', 'A'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(get(8, what)); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect(std::span<const std::uint8_t> b, const char* what) {
    need(b.size(), what);
    if (!std::equal(b.begin(), b.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_))) {
      throw FormatError(std::string("payload: bad ") + what, pos_);
    }
    pos_ += b.size();
  }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(std::string("payload: truncated while reading ") + what, pos_);
    }
  }
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_payload(const ClientPayload& payload) {
  Writer w;
  w.raw(kMagic);
  w.u32(kPayloadVersion);
  w.u64(payload.client_id());
  const ModelParams& params = payload.params();
  w.u32(static_cast<std::uint32_t>(params.layer_count()));
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    w.u32(static_cast<std::uint32_t>(params.layer(l).rows()));
    w.u32(static_cast<std::uint32_t>(params.layer(l).cols()));
    w.f64(payload.posterior(l).pi);
    w.f64(payload.posterior(l).lambda);
  }
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const Matrix& m = params.layer(l);
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
    for (double v : payload.posterior(l).a_factor.upper()) w.f64(v);
    for (double v : payload.posterior(l).b_factor.upper()) w.f64(v);
  }
  w.u64(payload.sample_count());
  return w.take();
}

ClientPayload decode_payload(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect(kMagic, "magic");
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kPayloadVersion) {
    throw FormatError("payload: unsupported version", version_at);
  }
  const std::uint64_t client_id = r.u64("client id");
  const std::size_t count_at = r.offset();
  const std::uint32_t n_layers = r.u32("layer count");
  if (n_layers == 0) throw FormatError("payload: zero layers", count_at);

  struct Dims {
    std::uint32_t rows, cols;
    double pi, lambda;
  };
  std::vector<Dims> dims(n_layers);
  std::vector<std::size_t> widths;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::size_t at = r.offset();
    dims[l].rows = r.u32("layer rows");
    dims[l].cols = r.u32("layer cols");
    dims[l].pi = r.f64("pi");
    dims[l].lambda = r.f64("lambda");
    if (dims[l].rows == 0 || dims[l].cols < 2) {
      throw FormatError("payload: degenerate layer shape", at);
    }
    if (l == 0) {
      widths.push_back(dims[l].cols - 1);
    } else if (dims[l].cols - 1 != dims[l - 1].rows) {
      throw FormatError("payload: layer " + std::to_string(l) + " input width " +
                            std::to_string(dims[l].cols - 1) + " does not chain to " +
                            std::to_string(dims[l - 1].rows),
                        at);
    }
    widths.push_back(dims[l].rows);
  }

  std::vector<Matrix> layers;
  std::vector<LayerPosterior> posteriors;
  std::vector<double> scratch;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    Matrix m(dims[l].rows, dims[l].cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64("weights");
    scratch.resize(upper_triangle_size(dims[l].cols));
    for (double& v : scratch) v = r.f64("A factor");
    SymmetricPsdMatrix a = SymmetricPsdMatrix::from_upper(scratch, dims[l].cols);
    scratch.resize(upper_triangle_size(dims[l].rows));
    for (double& v : scratch) v = r.f64("B factor");
    SymmetricPsdMatrix b = SymmetricPsdMatrix::from_upper(scratch, dims[l].rows);
    layers.push_back(std::move(m));
    posteriors.push_back({std::move(a), std::move(b), dims[l].pi, dims[l].lambda});
  }
  const std::uint64_t sample_count = r.u64("sample count");
  if (r.remaining() != 0) throw FormatError("payload: trailing bytes", r.offset());
  return build_payload(client_id, ModelParams(MlpArchitecture(widths), std::move(layers)),
                       std::move(posteriors), sample_count);
}

void save_payload(const std::filesystem::path& path, const ClientPayload& payload) {
  const std::vector<std::uint8_t> bytes = encode_payload(payload);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write payload", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("payload write failed", path.string());
}

ClientPayload load_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open payload", path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_payload(bytes);
}

}  // namespace fedlpa
