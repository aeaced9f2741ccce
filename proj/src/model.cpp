#include "cifvi/model.hpp"

#include <functional>

namespace cifvi {

namespace {

/// Total minus masked-out weights of every MADE conditioner inside `b`.
Index masked_out(const Bijection& b) {
  if (const auto* c = dynamic_cast<const Compose*>(&b)) {
    Index n = 0;
    for (const auto& p : c->parts()) n += masked_out(*p);
    return n;
  }
  if (const auto* m = dynamic_cast<const MaskedAffineAutoregressive*>(&b)) {
    auto& net = const_cast<MaskedAffineAutoregressive*>(m)->conditioner();
    Index full = 0;
    for (std::size_t k = 0; k < net.num_layers(); ++k) full += net.weight(k).value().size() + net.bias(k).value().size();
    return full - net.num_weights();
  }
  return 0;
}

}  // namespace

ParameterList Model::parameters() {
  ParameterList out;
  stack->collect(out);
  target->collect(out);
  return out;
}

ParameterList Model::trainable() {
  ParameterList out;
  for (Parameter* p : parameters())
    if (p->trainable()) out.push_back(p);
  return out;
}

Index Model::count_trainable() {
  Index n = 0;
  for (Parameter* p : trainable()) n += p->value().size();
  for (const auto& l : stack->layers()) n -= masked_out(l.g());
  return n;
}

Model build_model(const Config& config, Index data_dim) {
  validate(config);
  Model model;
  model.config = config;
  Rng rng(config.seed, 1);

  std::optional<Base> base;
  Index d = 0;
  Index r_extra = 0;
  if (config.is_image()) {
    if (data_dim < 1) throw std::invalid_argument("build_model: image runs need the data width");
    d = config.data.latent_dim;
    model.target = std::make_unique<LatentBernoulliModel>(d, data_dim, config.data.decoder_hidden, rng);
    r_extra = config.cif.enabled ? config.data.feature_dim : 0;
    base.emplace(std::make_shared<AmortizedEncoder>("encoder", data_dim, d, config.data.encoder_hidden, r_extra,
                                                    config.data.feature_hidden, rng));
  } else {
    if (config.is_mog())
      model.target = std::make_unique<MixtureOfGaussiansTarget>(mog_lattice(config.target.K));
    else
      model.target = std::make_unique<GaussianTarget>(GaussianTarget::standard(config.target.dim));
    d = model.target->dim_z();
    base.emplace("base", d, config.target.sigma0, config.target.sigma0_trainable);
  }

  CifLayerSpec spec;
  spec.u_dim = config.cif.u_dim;
  spec.st_hidden = spec.q_hidden = spec.r_hidden = config.cif.net_hidden;
  spec.r_extra_dim = r_extra;

  std::vector<CifLayer> layers;
  for (Index l = 0; l < config.flow.layers; ++l) {
    const std::string name = "layer" + std::to_string(l + 1);
    std::vector<BijectionPtr> parts;
    if (l > 0) parts.push_back(std::make_shared<ReversePermutation>(d));
    parts.push_back(std::make_shared<MaskedAffineAutoregressive>(name + ".made", d, config.flow.hidden, rng));
    if (config.flow.batch_norm) parts.push_back(std::make_shared<BatchNormBijection>(name + ".bn", d));
    BijectionPtr g = compose(d, std::move(parts));
    if (config.cif.enabled)
      layers.emplace_back(name, std::move(g), spec, rng);
    else
      layers.emplace_back(std::move(g));
  }
  model.stack = std::make_unique<CifStack>(std::move(*base), std::move(layers));
  return model;
}

}  // namespace cifvi
