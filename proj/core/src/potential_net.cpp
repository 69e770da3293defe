#include "deepjko/potential_net.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "deepjko/activation.hpp"
#include "deepjko/error.hpp"

namespace deepjko {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

constexpr std::array<char, 8> kMagic = {'D', 'J', 'K', 'O', 'N', 'E', 'T', '\0'};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Mat to_mat(const ad::Tensor& t) { return t.as_matrix(); }
Vec to_vec(const ad::Tensor& t) { return t.as_matrix().col(0); }

Vec apply(const Vec& v, double (*f)(double)) { return v.unaryExpr(f); }

Vec input_vector(const ResNetPotential& net, double tau, std::span<const double> x) {
  if (x.size() != net.dim) {
    throw Error(ErrorCode::ShapeMismatch, "potential: input has dimension " + std::to_string(x.size()) +
                                              " but the network expects " + std::to_string(net.dim));
  }
  Vec s(net.dim + 1);
  for (std::size_t i = 0; i < net.dim; ++i) s[static_cast<Eigen::Index>(i)] = x[i];
  s[static_cast<Eigen::Index>(net.dim)] = tau;
  return s;
}

struct ForwardTrace {
  std::vector<Vec> pre;  // a_0 .. a_{L-1}
  Vec u;                 // u_L
};

ForwardTrace run_forward(const ResNetPotential& net, const Vec& s) {
  ForwardTrace tr;
  tr.pre.reserve(net.layers);
  Vec a0 = to_mat(net.W0) * s + to_vec(net.b0);
  tr.u = apply(a0, sigma);
  tr.pre.push_back(std::move(a0));
  for (std::size_t l = 1; l < net.layers; ++l) {
    Vec a = to_mat(net.W[l - 1]) * tr.u + to_vec(net.b[l - 1]);
    tr.u += apply(a, sigma);
    tr.pre.push_back(std::move(a));
  }
  return tr;
}

// adjoint[l] = ∂φ/∂u_l for l = 1..L (index 0 unused).
std::vector<Vec> run_adjoint(const ResNetPotential& net, const ForwardTrace& tr) {
  std::vector<Vec> z(net.layers + 1);
  z[net.layers] = to_vec(net.w);
  for (std::size_t l = net.layers - 1; l >= 1; --l) {
    const Vec g = apply(tr.pre[l], sigma_prime).cwiseProduct(z[l + 1]);
    z[l] = z[l + 1] + to_mat(net.W[l - 1]).transpose() * g;
  }
  return z;
}

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::Format, "checkpoint: truncated header");
  return v;
}

}  // namespace

ResNetPotential ResNetPotential::zeros(std::size_t dim, std::size_t width, std::size_t layers) {
  if (dim == 0 || width == 0 || layers < 2) {
    throw Error(ErrorCode::InvalidArgument, "potential: need d >= 1, m >= 1 and L >= 2");
  }
  ResNetPotential net;
  net.dim = dim;
  net.width = width;
  net.layers = layers;
  net.W0 = ad::Tensor(width, dim + 1);
  net.b0 = ad::Tensor(width, 1);
  for (std::size_t l = 1; l < layers; ++l) {
    net.W.emplace_back(width, width);
    net.b.emplace_back(width, 1);
  }
  net.w = ad::Tensor(width, 1);
  return net;
}

ResNetPotential ResNetPotential::random(std::size_t dim, std::size_t width, std::size_t layers,
                                        InitMode mode, std::mt19937_64& rng) {
  ResNetPotential net = zeros(dim, width, layers);
  if (mode == InitMode::Zero) return net;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (ad::Tensor* p : net.parameters()) {
    // Weight matrices scale by their column count; vectors by the width feeding them.
    const double fan_in = p->cols() > 1 ? static_cast<double>(p->cols()) : static_cast<double>(width);
    const double s = mode == InitMode::ScaledNormal ? 1.0 / std::sqrt(fan_in) : 1.0;
    for (double& v : p->values()) v = s * normal(rng);
  }
  return net;
}

void fit_inputs(ResNetPotential& net, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  const auto d = static_cast<Eigen::Index>(net.dim);
  if (mean.size() != d || scale.size() != d) throw Error(ErrorCode::ShapeMismatch, "fit_inputs: expected length " + std::to_string(net.dim));
  if (!((scale.array() > 0.0).all() && scale.allFinite() && mean.allFinite())) {
    throw Error(ErrorCode::InvalidArgument, "fit_inputs: scale must be positive and finite");
  }
  auto W0 = net.W0.as_matrix();
  W0.leftCols(d) = W0.leftCols(d) * scale.cwiseInverse().asDiagonal();
  net.b0.as_matrix().col(0) -= W0.leftCols(d) * mean;
}

std::vector<ad::Tensor*> ResNetPotential::parameters() {
  std::vector<ad::Tensor*> out{&W0, &b0};
  for (std::size_t l = 0; l < W.size(); ++l) {
    out.push_back(&W[l]);
    out.push_back(&b[l]);
  }
  out.push_back(&w);
  return out;
}

std::vector<const ad::Tensor*> ResNetPotential::parameters() const {
  std::vector<const ad::Tensor*> out{&W0, &b0};
  for (std::size_t l = 0; l < W.size(); ++l) {
    out.push_back(&W[l]);
    out.push_back(&b[l]);
  }
  out.push_back(&w);
  return out;
}

std::size_t ResNetPotential::scalar_count() const {
  std::size_t n = 0;
  for (const ad::Tensor* p : parameters()) n += p->size();
  return n;
}

void ResNetPotential::validate() const {
  if (dim == 0 || width == 0 || layers < 2 || W.size() != layers - 1 || b.size() != layers - 1) {
    throw Error(ErrorCode::InvalidArgument, "potential: inconsistent layer structure");
  }
  auto expect = [](const ad::Tensor& t, std::size_t r, std::size_t c, const char* what) {
    if (t.rows() != r || t.cols() != c) {
      throw Error(ErrorCode::ShapeMismatch, std::string("potential: bad shape for ") + what);
    }
    require_finite(t, what);
  };
  expect(W0, width, dim + 1, "W0");
  expect(b0, width, 1, "b0");
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    expect(W[l], width, width, "W_l");
    expect(b[l], width, 1, "b_l");
  }
  expect(w, width, 1, "w");
}

bool operator==(const ResNetPotential& a, const ResNetPotential& b) {
  return a.dim == b.dim && a.width == b.width && a.layers == b.layers && a.W0 == b.W0 &&
         a.b0 == b.b0 && a.W == b.W && a.b == b.b && a.w == b.w;
}

double forward(const ResNetPotential& net, double tau, std::span<const double> x) {
  const Vec s = input_vector(net, tau, x);
  const double phi = to_vec(net.w).dot(run_forward(net, s).u);
  if (!std::isfinite(phi)) throw Error(ErrorCode::NonFinite, "potential: non-finite output");
  return phi;
}

Eigen::VectorXd input_gradient(const ResNetPotential& net, double tau, std::span<const double> x) {
  const Vec s = input_vector(net, tau, x);
  const ForwardTrace tr = run_forward(net, s);
  const std::vector<Vec> z = run_adjoint(net, tr);
  Vec grad = to_mat(net.W0).transpose() * apply(tr.pre[0], sigma_prime).cwiseProduct(z[1]);
  if (!grad.allFinite()) throw Error(ErrorCode::NonFinite, "potential: non-finite gradient");
  return grad;
}

Eigen::MatrixXd input_hessian(const ResNetPotential& net, double tau, std::span<const double> x) {
  const Vec s = input_vector(net, tau, x);
  const ForwardTrace tr = run_forward(net, s);
  const std::vector<Vec> z = run_adjoint(net, tr);
  const Mat W0 = to_mat(net.W0);

  Mat hess = W0.transpose() * apply(tr.pre[0], sigma_second).cwiseProduct(z[1]).asDiagonal() * W0;
  // J = ∂u_l/∂s, advanced through each residual block.
  Mat jac = apply(tr.pre[0], sigma_prime).asDiagonal() * W0;
  for (std::size_t l = 1; l < net.layers; ++l) {
    const Mat k = to_mat(net.W[l - 1]) * jac;
    hess += k.transpose() * apply(tr.pre[l], sigma_second).cwiseProduct(z[l + 1]).asDiagonal() * k;
    jac += apply(tr.pre[l], sigma_prime).asDiagonal() * k;
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  if (!hess.allFinite()) throw Error(ErrorCode::NonFinite, "potential: non-finite Hessian");
  return hess;
}

Eigen::VectorXd velocity(const ResNetPotential& net, double tau, std::span<const double> x) {
  return -input_gradient(net, tau, x).head(static_cast<Eigen::Index>(net.dim));
}

double divergence(const ResNetPotential& net, double tau, std::span<const double> x) {
  const auto d = static_cast<Eigen::Index>(net.dim);
  return -input_hessian(net, tau, x).topLeftCorner(d, d).trace();
}

void write_checkpoint(const ResNetPotential& net, std::ostream& out) {
  net.validate();
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(net.layers));
  write_u32(out, static_cast<std::uint32_t>(net.width));
  write_u32(out, static_cast<std::uint32_t>(net.dim));
  for (const ad::Tensor* p : net.parameters()) {
    out.write(reinterpret_cast<const char*>(p->values().data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::Io, "checkpoint: write failed");
}

ResNetPotential read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::Format, "checkpoint: bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::Format, "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t layers = read_u32(in);
  const std::uint32_t width = read_u32(in);
  const std::uint32_t dim = read_u32(in);
  if (layers < 2 || layers > 1024 || width == 0 || width > (1u << 16) || dim == 0 || dim > (1u << 16)) {
    throw Error(ErrorCode::Format, "checkpoint: implausible dimensions");
  }
  ResNetPotential net = ResNetPotential::zeros(dim, width, layers);
  for (ad::Tensor* p : net.parameters()) {
    in.read(reinterpret_cast<char*>(p->values().data()),
            static_cast<std::streamsize>(p->size() * sizeof(double)));
    if (!in) throw Error(ErrorCode::Format, "checkpoint: truncated parameter data");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::Format, "checkpoint: trailing bytes");
  net.validate();
  return net;
}

void save_checkpoint(const ResNetPotential& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(net, out);
}

ResNetPotential load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingCheckpoint, "checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace deepjko
