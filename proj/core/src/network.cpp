#include "sphcnn/network.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sphcnn/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sphcnn {

double relu(double x) { return x > 0.0 ? x : 0.0; }
double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& pre_activation) {
  return (pre_activation.array() > 0.0).cast<double>().matrix();
}

double magnitude_db(double magnitude) {
  if (!(magnitude > 0.0)) {
    throw DomainError("magnitude_db: magnitude must be positive, got " +
                      std::to_string(magnitude));
  }
  return 20.0 * std::log10(magnitude);
}

double magnitude_db_clamped(double magnitude, double floor) {
  return 20.0 * std::log10(std::max(magnitude, floor));
}

double lsd(const Matrix& truth, const Matrix& predicted) {
  if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols()) {
    throw ShapeError("lsd: shape mismatch (" + std::to_string(truth.rows()) + "x" +
                     std::to_string(truth.cols()) + " vs " +
                     std::to_string(predicted.rows()) + "x" +
                     std::to_string(predicted.cols()) + ")");
  }
  // Row-major accumulation, shared with the direction-subset metric so the
  // two agree bit-exactly when the subset covers every row.
  double sum = 0.0;
  for (Eigen::Index p = 0; p < truth.rows(); ++p) {
    sum += (truth.row(p) - predicted.row(p)).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(truth.rows() * truth.cols()));
}

Matrix lsd_grad(const Matrix& truth, const Matrix& predicted) {
  const double value = lsd(truth, predicted);
  if (value == 0.0) return Matrix::Zero(truth.rows(), truth.cols());
  return (predicted - truth) /
         (static_cast<double>(truth.rows() * truth.cols()) * value);
}

void ModelParams::validate() const {
  if (!sparse_grid || !dense_grid) throw ConfigError("ModelParams: grids not set");
  block1.validate();
  block2.validate();
  if (block1.kernels.in_channels() != channels) {
    throw ShapeError("ModelParams: block 1 expects " + std::to_string(channels) +
                     " input channels");
  }
  if (block2.kernels.in_channels() != block1.kernels.kernels()) {
    throw ShapeError("ModelParams: block channel chain broken");
  }
  if (block2.kernels.kernels() != channels) {
    throw ShapeError("ModelParams: block 2 must emit " + std::to_string(channels) +
                     " channels for the output mapping");
  }
  if (block1.kernels.order != n_conv || block2.kernels.order != n_conv) {
    throw ShapeError("ModelParams: kernel order must equal n_conv");
  }
  auto require_support = [](int order, int points, const char* what) {
    if (sh_count(order) > points) {
      throw IllConditionedError(std::string("ModelParams: ") + what + " order " +
                                std::to_string(order) + " unsupported by " +
                                std::to_string(points) + " directions");
    }
  };
  require_support(n_map_in, sparse_grid->size(), "n_map_in");
  require_support(n_conv, dense_grid->size(), "n_conv");
  require_support(n_map_out, dense_grid->size(), "n_map_out");
}

long ModelParams::parameter_count() const {
  auto bank_count = [](const ZonalKernelBank& bank) {
    long count = static_cast<long>(bank.order + 1) * bank.in_channels() * bank.kernels();
    if (bank.has_bias()) count += bank.kernels();
    return count;
  };
  return bank_count(block1.kernels) + bank_count(block2.kernels);
}

ModelParams init_model(const ModelConfig& config,
                       std::shared_ptr<const SphericalGrid> sparse_grid,
                       std::shared_ptr<const SphericalGrid> dense_grid) {
  ModelParams params;
  params.sparse_grid = std::move(sparse_grid);
  params.dense_grid = std::move(dense_grid);
  params.n_map_in = config.n_map_in;
  params.n_conv = config.n_conv;
  params.n_map_out = config.n_map_out;
  params.channels = config.channels;

  Rng rng(config.seed);
  // Fan-in variance scaling has to fold in the per-order convolution gain,
  // otherwise the conv path dwarfs the skip path at init. The extra 0.1
  // starts the residual branches small, near the pure-mapping resampler.
  const double base = 0.1 * std::sqrt(3.0 / config.channels);
  auto draw_bank = [&]() {
    ZonalKernelBank bank =
        zero_kernel_bank(config.n_conv, config.channels, config.channels, config.bias);
    for (int n = 0; n <= config.n_conv; ++n) {
      auto& w = bank.weights[static_cast<std::size_t>(n)];
      const double scale = base / spectral_scale(n);
      for (Eigen::Index c = 0; c < w.rows(); ++c) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          w(c, j) = rng.uniform(-scale, scale);
        }
      }
    }
    return bank;
  };
  params.block1.kernels = draw_bank();
  params.block2.kernels = draw_bank();
  params.validate();
  return params;
}

ModelWorkspace make_workspace(const ModelParams& params, BasisCache& cache,
                              const SolverOptions& opts) {
  params.validate();
  ModelWorkspace ws;
  ws.map_in = cache.solver(*params.sparse_grid, params.n_map_in, opts);
  ws.map_in_out = cache.basis(*params.dense_grid, params.n_map_in);
  ws.conv = cache.solver(*params.dense_grid, params.n_conv, opts);
  ws.map_out = cache.solver(*params.dense_grid, params.n_map_out, opts);
  return ws;
}

namespace {

void check_input(const Matrix& sparse_field, const ModelParams& params) {
  if (sparse_field.rows() != params.sparse_grid->size()) {
    throw ShapeError("model_forward: field has " + std::to_string(sparse_field.rows()) +
                     " rows, sparse grid has " + std::to_string(params.sparse_grid->size()));
  }
  if (sparse_field.cols() != params.channels) {
    throw ShapeError("model_forward: field has " + std::to_string(sparse_field.cols()) +
                     " channels, model expects " + std::to_string(params.channels));
  }
}

}  // namespace

Matrix model_forward(const Matrix& sparse_field, const ModelParams& params,
                     const ModelWorkspace& ws, ForwardCache* cache) {
  check_input(sparse_field, params);

  Matrix x = isht(ws.map_in->sht(sparse_field), *ws.map_in_out);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.x0 = x;

  auto run_block = [&](const ConvBlockParams& block, ShCoefficients& a_out,
                       ShCoefficients& c_out, Matrix& y_out, Matrix& x_out) {
    a_out = ws.conv->sht(x);
    c_out = conv_layer_forward(a_out, block.kernels);
    y_out = ws.conv->isht(c_out);
    Matrix activated = block.use_relu ? relu(y_out) : y_out;
    x_out = block.use_skip ? Matrix(activated + x) : std::move(activated);
    x = x_out;
  };
  run_block(params.block1, c.a1, c.c1, c.y1, c.x1);
  run_block(params.block2, c.a2, c.c2, c.y2, c.x2);

  c.output = ws.map_out->isht(ws.map_out->sht(x));
  c.valid = true;
  return c.output;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  auto add_bank = [](ZonalKernelBank& into, const ZonalKernelBank& from) {
    for (std::size_t n = 0; n < into.weights.size(); ++n) into.weights[n] += from.weights[n];
    if (into.has_bias()) into.bias += from.bias;
  };
  add_bank(block1, other.block1);
  add_bank(block2, other.block2);
  return *this;
}

GradientBundle& GradientBundle::operator*=(double scale) {
  auto scale_bank = [scale](ZonalKernelBank& bank) {
    for (auto& w : bank.weights) w *= scale;
    if (bank.has_bias()) bank.bias *= scale;
  };
  scale_bank(block1);
  scale_bank(block2);
  return *this;
}

bool GradientBundle::all_finite() const {
  auto bank_finite = [](const ZonalKernelBank& bank) {
    for (const auto& w : bank.weights) {
      if (!w.allFinite()) return false;
    }
    return !bank.has_bias() || bank.bias.allFinite();
  };
  return bank_finite(block1) && bank_finite(block2);
}

GradientBundle zero_gradients(const ModelParams& params) {
  auto like = [](const ZonalKernelBank& bank) {
    return zero_kernel_bank(bank.order, bank.in_channels(), bank.kernels(),
                            bank.has_bias());
  };
  return GradientBundle{like(params.block1.kernels), like(params.block2.kernels)};
}

GradientBundle model_backward(const ModelParams& params, const ModelWorkspace& ws,
                              const ForwardCache& cache, const Matrix& output_grad) {
  if (!cache.valid) throw Error("model_backward: forward cache is not populated");
  if (output_grad.rows() != cache.output.rows() ||
      output_grad.cols() != cache.output.cols()) {
    throw ShapeError("model_backward: output gradient shape mismatch");
  }

  GradientBundle grads = zero_gradients(params);

  // Output mapping block: out = Y * (pinv * x2).
  Matrix gx = ws.map_out->sht_adjoint(ws.map_out->isht_adjoint(output_grad));

  auto back_block = [&](const ConvBlockParams& block, const ShCoefficients& a,
                        const Matrix& y, ZonalKernelBank& bank_grad) {
    Matrix gy = block.use_relu ? Matrix(gx.cwiseProduct(relu_mask(y))) : gx;
    ShCoefficients gc{ws.conv->isht_adjoint(gy), a.order};
    ConvLayerGrads layer = conv_layer_backward(a, block.kernels, gc);
    bank_grad = std::move(layer.bank);
    Matrix gx_conv = ws.conv->sht_adjoint(layer.input.values);
    gx = block.use_skip ? Matrix(gx_conv + gx) : std::move(gx_conv);
  };
  back_block(params.block2, cache.a2, cache.y2, grads.block2);
  back_block(params.block1, cache.a1, cache.y1, grads.block1);

  return grads;
}

namespace {

long bank_size(const ZonalKernelBank& bank) {
  long count = static_cast<long>(bank.order + 1) * bank.in_channels() * bank.kernels();
  if (bank.has_bias()) count += bank.kernels();
  return count;
}

void pack_bank(const ZonalKernelBank& bank, Vector& flat, long& offset) {
  for (const auto& w : bank.weights) {
    const long size = static_cast<long>(w.size());
    flat.segment(offset, size) = Eigen::Map<const Vector>(w.data(), size);
    offset += size;
  }
  if (bank.has_bias()) {
    flat.segment(offset, bank.bias.size()) = bank.bias;
    offset += bank.bias.size();
  }
}

void unpack_bank(const Vector& flat, ZonalKernelBank& bank, long& offset) {
  for (auto& w : bank.weights) {
    const long size = static_cast<long>(w.size());
    Eigen::Map<Vector>(w.data(), size) = flat.segment(offset, size);
    offset += size;
  }
  if (bank.has_bias()) {
    bank.bias = flat.segment(offset, bank.bias.size());
    offset += bank.bias.size();
  }
}

}  // namespace

Vector pack_params(const ModelParams& params) {
  Vector flat(bank_size(params.block1.kernels) + bank_size(params.block2.kernels));
  long offset = 0;
  pack_bank(params.block1.kernels, flat, offset);
  pack_bank(params.block2.kernels, flat, offset);
  return flat;
}

void unpack_params(const Vector& flat, ModelParams& params) {
  const long expected =
      bank_size(params.block1.kernels) + bank_size(params.block2.kernels);
  if (flat.size() != expected) {
    throw ShapeError("unpack_params: expected " + std::to_string(expected) +
                     " values, got " + std::to_string(flat.size()));
  }
  long offset = 0;
  unpack_bank(flat, params.block1.kernels, offset);
  unpack_bank(flat, params.block2.kernels, offset);
}

Vector pack_grads(const GradientBundle& grads) {
  Vector flat(bank_size(grads.block1) + bank_size(grads.block2));
  long offset = 0;
  pack_bank(grads.block1, flat, offset);
  pack_bank(grads.block2, flat, offset);
  return flat;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'P', 'H', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError(std::string("checkpoint: truncated while reading ") + what);
  return value;
}

void write_grid(std::ostream& out, const SphericalGrid& grid) {
  write_pod(out, static_cast<std::uint32_t>(grid.size()));
  for (const auto& d : grid.directions()) {
    write_pod(out, d.theta);
    write_pod(out, d.phi);
  }
}

SphericalGrid read_grid(std::istream& in) {
  const auto p = read_pod<std::uint32_t>(in, "grid size");
  std::vector<Direction> dirs;
  dirs.reserve(p);
  for (std::uint32_t i = 0; i < p; ++i) {
    const double theta = read_pod<double>(in, "grid point");
    const double phi = read_pod<double>(in, "grid point");
    dirs.emplace_back(theta, phi);
  }
  return SphericalGrid(std::move(dirs));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint32_t>(params.n_map_in));
  write_pod(out, static_cast<std::uint32_t>(params.n_conv));
  write_pod(out, static_cast<std::uint32_t>(params.n_map_out));
  write_pod(out, static_cast<std::uint32_t>(params.channels));
  write_pod(out, static_cast<std::uint32_t>(params.block1.kernels.kernels()));
  write_pod(out, static_cast<std::uint32_t>(params.block2.kernels.kernels()));
  std::uint32_t flags = 0;
  if (params.block1.kernels.has_bias()) flags |= 1u;
  if (params.block2.kernels.has_bias()) flags |= 2u;
  if (params.block1.use_skip) flags |= 4u;
  if (params.block2.use_skip) flags |= 8u;
  if (params.block1.use_relu) flags |= 16u;
  if (params.block2.use_relu) flags |= 32u;
  write_pod(out, flags);
  write_pod(out, params.sparse_grid->hash());
  write_pod(out, params.dense_grid->hash());
  write_grid(out, *params.sparse_grid);
  write_grid(out, *params.dense_grid);

  const Vector flat = pack_params(params);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }

  ModelParams params;
  params.n_map_in = static_cast<int>(read_pod<std::uint32_t>(in, "n_map_in"));
  params.n_conv = static_cast<int>(read_pod<std::uint32_t>(in, "n_conv"));
  params.n_map_out = static_cast<int>(read_pod<std::uint32_t>(in, "n_map_out"));
  params.channels = static_cast<int>(read_pod<std::uint32_t>(in, "channels"));
  const int u1 = static_cast<int>(read_pod<std::uint32_t>(in, "block 1 width"));
  const int u2 = static_cast<int>(read_pod<std::uint32_t>(in, "block 2 width"));
  const auto flags = read_pod<std::uint32_t>(in, "flags");
  const auto sparse_hash = read_pod<std::uint64_t>(in, "sparse grid hash");
  const auto dense_hash = read_pod<std::uint64_t>(in, "dense grid hash");

  auto sparse = std::make_shared<SphericalGrid>(read_grid(in));
  auto dense = std::make_shared<SphericalGrid>(read_grid(in));
  if (sparse->hash() != sparse_hash || dense->hash() != dense_hash) {
    throw ParseError("checkpoint: grid payload does not match header hashes");
  }
  params.sparse_grid = std::move(sparse);
  params.dense_grid = std::move(dense);

  params.block1.kernels = zero_kernel_bank(params.n_conv, params.channels, u1, flags & 1u);
  params.block2.kernels = zero_kernel_bank(params.n_conv, u1, u2, flags & 2u);
  params.block1.use_skip = flags & 4u;
  params.block2.use_skip = flags & 8u;
  params.block1.use_relu = flags & 16u;
  params.block2.use_relu = flags & 32u;

  Vector flat(bank_size(params.block1.kernels) + bank_size(params.block2.kernels));
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in) throw ParseError("checkpoint: truncated parameter payload in " + path.string());
  char extra;
  if (in.read(&extra, 1)) {
    throw ParseError("checkpoint: trailing bytes after parameter payload");
  }
  unpack_params(flat, params);
  params.validate();
  return params;
}

}  // namespace sphcnn
