#include "cifvi/cif.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cifvi {

namespace {

void check_x(const CifStack& stack, const Tensor* x, Index n) {
  if (!stack.amortized()) {
    if (x != nullptr) throw std::invalid_argument("un-amortized stack does not take x");
    return;
  }
  if (x == nullptr) throw std::invalid_argument("amortized stack requires x");
  if (x->rows() != n) throw ShapeError("x has " + std::to_string(x->rows()) + " rows, expected " + std::to_string(n));
}

void check_x_presence(const CifStack& stack, const Tensor* x) {
  if (stack.amortized() && x == nullptr) throw std::invalid_argument("amortized stack requires x");
}

/// Input of r_l: w_l, with data features appended when amortized.
Tensor r_input(const Tensor& w, const Tensor& features) {
  if (features.cols() == 0) return w;
  return concat(w, features);
}

void check_target(const Tensor& log_p, const Tensor& z) {
  const Matrix& v = log_p.value();
  for (Index i = 0; i < v.rows(); ++i) {
    if (!std::isfinite(v(i, 0))) {
      std::ostringstream os;
      os << "non-finite target log-density " << v(i, 0) << " at z = [" << z.value().row(i) << "]";
      throw NonFiniteDensityError(os.str(), z.value().row(i));
    }
  }
}

Tensor empty_u(Index n) { return Tensor::zeros(n, 0); }

}  // namespace

AmortizedEncoder::AmortizedEncoder(std::string name, Index dim_x, Index dim_z, const std::vector<Index>& hidden,
                                   Index feature_dim, const std::vector<Index>& feature_hidden, Rng& rng)
    : net_(name + ".q0", dim_x, dim_z, hidden, rng, true) {
  if (feature_dim > 0) {
    std::vector<Index> widths{dim_x};
    widths.insert(widths.end(), feature_hidden.begin(), feature_hidden.end());
    widths.push_back(feature_dim);
    feature_net_.emplace(name + ".features", std::move(widths), rng);
  }
}

Tensor AmortizedEncoder::features(const Tensor& x, Tape* tape) const {
  if (!feature_net_) return Tensor::zeros(x.rows(), 0);
  return feature_net_->forward(x, tape);
}

void AmortizedEncoder::collect(ParameterList& out) {
  net_.collect(out);
  if (feature_net_) feature_net_->collect(out);
}

Base::Base(std::string name, Index d, double sigma0, bool trainable_log_std) : dim_(d) {
  if (d < 1) throw std::invalid_argument("Base: dimension must be positive");
  if (!(sigma0 > 0)) throw std::invalid_argument("Base: sigma0 must be positive");
  mean_.emplace(name + ".mean", Matrix::Zero(1, d), false);
  log_std_.emplace(name + ".log_std", Matrix::Constant(1, d, std::log(sigma0)), trainable_log_std);
}

Base::Base(std::shared_ptr<AmortizedEncoder> encoder) : dim_(encoder->dim_z()), encoder_(std::move(encoder)) {}

DiagonalGaussian Base::distribution(const Tensor* x, Tape* tape) const {
  if (encoder_) {
    if (x == nullptr) throw std::invalid_argument("amortized base requires x");
    return encoder_->posterior(*x, tape);
  }
  return {bind(*mean_, tape), bind(*log_std_, tape)};
}

Tensor Base::features(const Tensor* x, Tape* tape) const {
  if (!encoder_ || x == nullptr) return Tensor::zeros(x ? x->rows() : 0, 0);
  return encoder_->features(*x, tape);
}

void Base::collect(ParameterList& out) {
  if (encoder_) {
    encoder_->collect(out);
    return;
  }
  out.push_back(&*mean_);
  out.push_back(&*log_std_);
}

CifLayer::CifLayer(BijectionPtr g) : g_(std::move(g)) {
  if (!g_) throw std::invalid_argument("CifLayer: null bijection");
}

CifLayer::CifLayer(const std::string& name, BijectionPtr g, const CifLayerSpec& spec, Rng& rng)
    : g_(std::move(g)), u_dim_(spec.u_dim) {
  if (!g_) throw std::invalid_argument("CifLayer: null bijection");
  if (u_dim_ < 1) throw std::invalid_argument("CifLayer: indexed layer needs u_dim >= 1");
  const Index d = g_->dim();
  std::vector<Index> st_widths{u_dim_};
  st_widths.insert(st_widths.end(), spec.st_hidden.begin(), spec.st_hidden.end());
  st_widths.push_back(2 * d);
  st_net_ = std::make_shared<Mlp>(name + ".st", std::move(st_widths), rng, true);
  q_u_ = std::make_shared<ConditionalGaussianNet>(name + ".q_u", d, u_dim_, spec.q_hidden, rng, spec.zero_q_final);
  r_u_ = std::make_shared<ConditionalGaussianNet>(name + ".r_u", d + spec.r_extra_dim, u_dim_, spec.r_hidden, rng,
                                                  true);
}

void CifLayer::share_r_with_q() {
  if (!indexed()) throw std::logic_error("share_r_with_q: layer has no index variable");
  if (r_u_->cond_dim() != q_u_->cond_dim()) throw ShapeError("share_r_with_q: r and q take different inputs");
  r_u_ = q_u_;
}

std::pair<Tensor, Tensor> CifLayer::shift_scale(const Tensor& u, Tape* tape) const {
  if (u.cols() != u_dim_) throw ShapeError("CifLayer: u has wrong width");
  return st_net_->forward_heads(u, tape);
}

void CifLayer::collect(ParameterList& out) {
  g_->collect(out);
  if (!indexed()) return;
  st_net_->collect(out);
  q_u_->collect(out);
  if (!r_shared()) r_u_->collect(out);
}

FlowResult index_transform(const CifLayer& layer, const Tensor& w, const Tensor& u, Tape* tape) {
  FlowResult gw = layer.g().forward(w, tape);
  if (!layer.indexed()) return gw;
  auto [s, t] = layer.shift_scale(u, tape);
  return {exp(s) * (gw.out + t), gw.logdet + row_sum(s)};
}

FlowResult index_inverse(const CifLayer& layer, const Tensor& z, const Tensor& u, Tape* tape) {
  if (!layer.indexed()) return layer.g().inverse(z, tape);
  auto [s, t] = layer.shift_scale(u, tape);
  FlowResult gi = layer.g().inverse(z * exp(neg(s)) - t, tape);
  return {gi.out, gi.logdet - row_sum(s)};
}

CifStack::CifStack(Base base, std::vector<CifLayer> layers) : base_(std::move(base)), layers_(std::move(layers)) {
  for (const auto& l : layers_)
    if (l.dim() != base_.dim()) throw ShapeError("CifStack: layer dimension differs from base");
}

bool CifStack::indexed() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const CifLayer& l) { return l.indexed(); });
}

BijectionPtr CifStack::base_flow() const {
  std::vector<BijectionPtr> parts;
  for (const auto& l : layers_) parts.push_back(l.g_ptr());
  return compose(dim_z(), std::move(parts));
}

void CifStack::collect(ParameterList& out) {
  base_.collect(out);
  for (auto& l : layers_) l.collect(out);
}

void CifStack::set_mode(Mode mode) {
  for (auto& l : layers_) l.g_ptr()->set_mode(mode);
}

PathNoise draw_path_noise(const CifStack& stack, Rng& rng, Index n) {
  PathNoise noise;
  noise.w0 = rng.normal(n, stack.dim_z());
  for (const auto& l : stack.layers()) noise.u.push_back(rng.normal(n, l.u_dim()));
  return noise;
}

SamplePath sample_path(const CifStack& stack, Rng& rng, Index n, const Tensor* x, Tape* tape) {
  check_x(stack, x, n);
  return sample_path(stack, draw_path_noise(stack, rng, n), x, tape);
}

SamplePath sample_path(const CifStack& stack, const PathNoise& noise, const Tensor* x, Tape* tape) {
  const Index n = noise.w0.rows();
  check_x(stack, x, n);
  if (noise.u.size() != stack.layers().size()) throw std::invalid_argument("sample_path: noise/layer count mismatch");
  SamplePath path;
  const DiagonalGaussian q0 = stack.base().distribution(x, tape);
  path.eps_w0 = noise.w0;
  path.w0 = reparametrize(q0, noise.w0);
  path.log_q0 = log_prob(q0, path.w0);
  Tensor w = path.w0;
  for (std::size_t l = 0; l < stack.layers().size(); ++l) {
    const CifLayer& layer = stack.layers()[l];
    Tensor u = empty_u(n);
    Tensor log_q_u = Tensor::zeros(n, 1);
    if (layer.indexed()) {
      const DiagonalGaussian qu = layer.q_u().condition(w, tape);
      u = reparametrize(qu, noise.u[l]);
      log_q_u = log_prob(qu, u);
    }
    FlowResult step = index_transform(layer, w, u, tape);
    path.u.push_back(u);
    path.eps_u.push_back(noise.u[l]);
    path.log_q_u.push_back(log_q_u);
    path.logdet.push_back(step.logdet);
    path.w.push_back(step.out);
    w = step.out;
  }
  return path;
}

Tensor elbo_terms(const CifStack& stack, const Target& target, const SamplePath& path, const Tensor* x,
                  Tape* tape) {
  check_x_presence(stack, x);
  const Tensor features = stack.base().features(x, tape);
  Tensor delta = neg(path.log_q0);
  for (std::size_t l = 0; l < stack.layers().size(); ++l) {
    const CifLayer& layer = stack.layers()[l];
    if (layer.indexed()) {
      const DiagonalGaussian r = layer.r_u().condition(r_input(path.w[l], features), tape);
      delta = delta + log_prob(r, path.u[l]) - path.log_q_u[l];
    }
    delta = delta + path.logdet[l];
  }
  Tensor log_p = target.log_joint(x, path.z(), tape);
  check_target(log_p, path.z());
  return delta + log_p;
}

Tensor elbo_estimate(const CifStack& stack, const Target& target, const Tensor* x, Rng& rng, Index n,
                     Tape* tape) {
  SamplePath path = sample_path(stack, rng, n, x, tape);
  return elbo_terms(stack, target, path, x, tape);
}

Tensor baseline_elbo_estimate(const Base& base, const Bijection& g, const Target& target, const Tensor* x,
                              Rng& rng, Index n, Tape* tape) {
  if (base.amortized() && (x == nullptr || x->rows() != n))
    throw std::invalid_argument("baseline_elbo_estimate: amortized base requires x with n rows");
  const DiagonalGaussian q0 = base.distribution(x, tape);
  const GaussianDraw draw = rsample(q0, rng, n);
  FlowResult gw = g.forward(draw.z, tape);
  Tensor log_p = target.log_joint(x, gw.out, tape);
  check_target(log_p, gw.out);
  return log_p - log_prob(q0, draw.z) + gw.logdet;
}

Tensor joint_log_prob(const CifStack& stack, const Tensor& z, const std::vector<Tensor>& u, const Tensor* x,
                      Tape* tape) {
  check_x_presence(stack, x);
  if (u.size() != stack.layers().size()) throw std::invalid_argument("joint_log_prob: one u per layer required");
  Tensor w = z;
  Tensor total = Tensor::zeros(z.rows(), 1);
  for (std::size_t l = stack.layers().size(); l-- > 0;) {
    const CifLayer& layer = stack.layers()[l];
    FlowResult back = index_inverse(layer, w, u[l], tape);
    total = total + back.logdet;
    if (layer.indexed()) total = total + log_prob(layer.q_u().condition(back.out, tape), u[l]);
    w = back.out;
  }
  return total + log_prob(stack.base().distribution(x, tape), w);
}

std::vector<Tensor> reconstruct_path(const CifStack& stack, const Tensor& z, const std::vector<Tensor>& u,
                                     Tape* tape) {
  if (u.size() != stack.layers().size()) throw std::invalid_argument("reconstruct_path: one u per layer required");
  std::vector<Tensor> ws(stack.layers().size() + 1);
  ws.back() = z;
  for (std::size_t l = stack.layers().size(); l-- > 0;) ws[l] = index_inverse(stack.layers()[l], ws[l + 1], u[l], tape).out;
  return ws;
}

Tensor r_log_prob(const CifStack& stack, const std::vector<Tensor>& u, const Tensor& z, const Tensor* x,
                  Tape* tape) {
  check_x_presence(stack, x);
  if (u.size() != stack.layers().size()) throw std::invalid_argument("r_log_prob: one u per layer required");
  const Tensor features = stack.base().features(x, tape);
  Tensor w = z;
  Tensor total = Tensor::zeros(z.rows(), 1);
  for (std::size_t l = stack.layers().size(); l-- > 0;) {
    const CifLayer& layer = stack.layers()[l];
    if (layer.indexed()) total = total + log_prob(layer.r_u().condition(r_input(w, features), tape), u[l]);
    w = index_inverse(layer, w, u[l], tape).out;
  }
  return total;
}

AuxiliaryDraw sample_auxiliary(const CifStack& stack, const Tensor& z, const Tensor* x, Rng& rng, Tape* tape) {
  check_x_presence(stack, x);
  const Index n = z.rows();
  const Tensor features = stack.base().features(x, tape);
  AuxiliaryDraw draw;
  draw.u.resize(stack.layers().size());
  draw.log_r = Tensor::zeros(n, 1);
  draw.log_joint = Tensor::zeros(n, 1);
  Tensor w = z;
  for (std::size_t l = stack.layers().size(); l-- > 0;) {
    const CifLayer& layer = stack.layers()[l];
    Tensor u = empty_u(n);
    if (layer.indexed()) {
      const DiagonalGaussian r = layer.r_u().condition(r_input(w, features), tape);
      u = rsample(r, rng, n).z;
      draw.log_r = draw.log_r + log_prob(r, u);
    }
    FlowResult back = index_inverse(layer, w, u, tape);
    draw.log_joint = draw.log_joint + back.logdet;
    if (layer.indexed()) draw.log_joint = draw.log_joint + log_prob(layer.q_u().condition(back.out, tape), u);
    draw.u[l] = u;
    w = back.out;
  }
  draw.log_joint = draw.log_joint + log_prob(stack.base().distribution(x, tape), w);
  return draw;
}

}  // namespace cifvi
