#include "hwm/nn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "hwm/nn/embedding.hpp"
#include "hwm/nn/ops.hpp"
#include "hwm/util/rng.hpp"

namespace hwm::nn {

std::string to_string(ArchKind kind) { return kind == ArchKind::FilmMlp ? "film_mlp" : "unet"; }

ArchKind arch_kind_from_string(const std::string& name) {
  if (name == "film_mlp") return ArchKind::FilmMlp;
  if (name == "unet") return ArchKind::UNet;
  throw std::invalid_argument("unknown architecture kind '" + name + "'");
}

Shape Architecture::state_shape() const {
  if (kind == ArchKind::FilmMlp) return {channels};
  return {channels, height, width};
}

template <class T>
Network<T>::Network(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  if (arch_.channels == 0) throw std::invalid_argument("architecture needs at least one state channel");
  if (arch_.kind == ArchKind::FilmMlp) {
    build_mlp(seed);
  } else {
    build_unet(seed);
  }
  embed_first_ = add_linear_params("embed.fc1", kHorizonEmbedDim, arch_.embed_hidden, seed);
  add_linear_params("embed.fc2", arch_.embed_hidden, 2 * film_width_, seed);
}

template <class T>
std::size_t Network<T>::add_linear_params(const std::string& name, std::size_t in, std::size_t out,
                                          std::uint64_t seed, double init_scale) {
  Rng rng(derive_seed(seed, params_.size()));
  const double bound = init_scale / std::sqrt(static_cast<double>(in));
  Tensor<T> w({out, in});
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  Tensor<T> b({out});
  for (auto& v : b.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  const std::size_t first = params_.add(name + ".weight", std::move(w));
  params_.add(name + ".bias", std::move(b));
  return first;
}

template <class T>
std::size_t Network<T>::add_conv_params(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                                        std::uint64_t seed, double init_scale) {
  Rng rng(derive_seed(seed, params_.size()));
  const double bound = init_scale / std::sqrt(static_cast<double>(in * k * k));
  Tensor<T> w({out, in, k, k});
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  Tensor<T> b({out});
  for (auto& v : b.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  const std::size_t first = params_.add(name + ".weight", std::move(w));
  params_.add(name + ".bias", std::move(b));
  return first;
}

template <class T>
std::size_t Network<T>::add_film_site(std::size_t width) {
  film_sites_.push_back({width, film_width_});
  film_width_ += width;
  return film_sites_.size() - 1;
}

template <class T>
void Network<T>::build_mlp(std::uint64_t seed) {
  const std::size_t d = arch_.channels, h = arch_.hidden;
  if (h == 0 || arch_.blocks == 0) throw std::invalid_argument("film_mlp needs hidden > 0 and blocks > 0");
  input_first_ = add_linear_params("input", d, h, seed);
  for (std::size_t b = 0; b < arch_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    block_first_.push_back(add_linear_params(p + ".fc1", h, h, seed));
    add_linear_params(p + ".fc2", h, h, seed);
    add_film_site(h);
  }
  output_first_ = add_linear_params("output", h, d, seed, arch_.output_init_scale);
}

template <class T>
void Network<T>::build_unet(std::uint64_t seed) {
  const auto& m = arch_.multipliers;
  if (m.empty() || arch_.base_channels == 0) throw std::invalid_argument("unet needs base_channels > 0 and >= 1 stage");
  const std::size_t stages = m.size();
  const std::size_t div = std::size_t{1} << (stages - 1);
  if (arch_.height % div != 0 || arch_.width % div != 0) {
    throw std::invalid_argument("unet with " + std::to_string(stages) + " stages needs H and W divisible by " +
                                std::to_string(div));
  }
  std::vector<std::size_t> ch(stages);
  for (std::size_t s = 0; s < stages; ++s) ch[s] = arch_.base_channels * m[s];

  std::size_t cin = arch_.channels;
  for (std::size_t s = 0; s < stages; ++s) {
    const std::string p = "enc" + std::to_string(s);
    block_first_.push_back(add_conv_params(p + ".conv1", cin, ch[s], 3, seed));
    add_conv_params(p + ".conv2", ch[s], ch[s], 3, seed);
    add_film_site(ch[s]);
    cin = ch[s];
  }
  for (std::size_t s = stages - 1; s-- > 0;) {
    const std::string p = "dec" + std::to_string(s);
    block_first_.push_back(add_conv_params(p + ".conv1", ch[s + 1] + ch[s], ch[s], 3, seed));
    add_conv_params(p + ".conv2", ch[s], ch[s], 3, seed);
    add_film_site(ch[s]);
  }
  output_first_ = add_conv_params("output", ch[0], arch_.channels, 1, seed, arch_.output_init_scale);
}

template <class T>
Var<T> Network<T>::dense(Graph<T>& g, Var<T> x, std::size_t first) {
  return linear(x, g.parameter(params_, first), g.parameter(params_, first + 1));
}

template <class T>
Var<T> Network<T>::conv(Graph<T>& g, Var<T> x, std::size_t first) {
  return conv2d(x, g.parameter(params_, first), g.parameter(params_, first + 1));
}

template <class T>
Var<T> Network<T>::modulate(Var<T> x, Var<T> film_out, std::size_t site) {
  const FilmSite& fs = film_sites_[site];
  Var<T> gamma = add_scalar(slice_cols(film_out, 2 * fs.offset, fs.width), T(1));
  Var<T> beta = slice_cols(film_out, 2 * fs.offset + fs.width, fs.width);
  return film(x, gamma, beta);
}

template <class T>
Var<T> Network<T>::conv_block(Graph<T>& g, Var<T> x, std::size_t first, Var<T> film_out, std::size_t site) {
  Var<T> u = silu(conv(g, x, first));
  u = conv(g, u, first + 2);
  return silu(modulate(u, film_out, site));
}

template <class T>
Var<T> Network<T>::embed(Graph<T>& g, std::span<const int> horizons) {
  g.set_scope("embed");
  Var<T> e = g.input(horizon_embed_batch<T>(horizons));
  e = silu(dense(g, e, embed_first_));
  return dense(g, e, embed_first_ + 2);
}

template <class T>
Var<T> Network<T>::forward(Graph<T>& g, Var<T> x, std::span<const int> horizons) {
  const Shape& xs = x.shape();
  const Shape state = arch_.state_shape();
  if (xs.size() != state.size() + 1 || !std::equal(state.begin(), state.end(), xs.begin() + 1)) {
    throw ShapeError("network expects [N]" + shape_str(state) + " input, got " + shape_str(xs));
  }
  if (horizons.size() != xs[0]) {
    throw ShapeError("network got " + std::to_string(horizons.size()) + " horizons for a batch of " +
                     std::to_string(xs[0]));
  }
  Var<T> film_out = embed(g, horizons);

  Var<T> delta;
  if (arch_.kind == ArchKind::FilmMlp) {
    g.set_scope("input");
    Var<T> h = dense(g, x, input_first_);
    for (std::size_t b = 0; b < arch_.blocks; ++b) {
      g.set_scope("block" + std::to_string(b));
      Var<T> u = dense(g, silu(h), block_first_[b]);
      u = silu(modulate(u, film_out, b));
      u = dense(g, u, block_first_[b] + 2);
      h = add(h, u);
    }
    g.set_scope("output");
    delta = dense(g, silu(h), output_first_);
  } else {
    const std::size_t stages = arch_.multipliers.size();
    std::vector<Var<T>> skips;
    Var<T> h = x;
    for (std::size_t s = 0; s < stages; ++s) {
      g.set_scope("enc" + std::to_string(s));
      if (s > 0) h = avg_pool2(h);
      h = conv_block(g, h, block_first_[s], film_out, s);
      skips.push_back(h);
    }
    std::size_t blk = stages;
    for (std::size_t s = stages - 1; s-- > 0; ++blk) {
      g.set_scope("dec" + std::to_string(s));
      h = concat_channels(upsample_nearest2(h), skips[s]);
      h = conv_block(g, h, block_first_[blk], film_out, blk);
    }
    g.set_scope("output");
    delta = conv(g, h, output_first_);
  }
  g.set_scope("residual");
  Var<T> out = add(x, delta);
  g.set_scope({});
  return out;
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, std::span<const int> horizons) {
  Graph<T> g(false);
  Var<T> out = forward(g, g.input(x), horizons);
  return out.value();
}

template <class T>
void Network<T>::zero_output_projection() {
  params_.tensor(output_first_).fill(T(0));
  params_.tensor(output_first_ + 1).fill(T(0));
}

template class Network<float>;
template class Network<double>;

}  // namespace hwm::nn
