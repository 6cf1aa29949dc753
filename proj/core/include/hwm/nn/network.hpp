#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hwm/nn/graph.hpp"

namespace hwm::nn {

enum class ArchKind { FilmMlp, UNet };

std::string to_string(ArchKind kind);
ArchKind arch_kind_from_string(const std::string& name);

/// Network shape. The MLP fields apply to FilmMlp, the stage fields to UNet.
struct Architecture {
  ArchKind kind = ArchKind::FilmMlp;
  std::size_t channels = 9;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t hidden = 256;
  std::size_t blocks = 4;

  std::size_t base_channels = 16;
  std::vector<std::size_t> multipliers{1, 2};

  std::size_t embed_hidden = 128;
  /// Scale applied to the default init of the final projection.
  double output_init_scale = 1.0;

  Shape state_shape() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Horizon-conditioned residual network: forward(s, T) = s + delta(s, T).
/// FiLM-MLP for vector states, a U-Net for C x H x W fields. The horizon is fed
/// through sinusoidal features and a two-layer MLP that emits per-block
/// (gamma, beta); gamma is parameterised as 1 + raw.
template <class T>
class Network {
 public:
  Network(Architecture arch, std::uint64_t seed);

  const Architecture& arch() const noexcept { return arch_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }

  /// x is [N, ...state_shape]; one horizon per batch row.
  Var<T> forward(Graph<T>& g, Var<T> x, std::span<const int> horizons);

  /// Inference without gradient recording.
  Tensor<T> forward(const Tensor<T>& x, std::span<const int> horizons);

  /// Zero the weights and bias of the layer that produces delta.
  void zero_output_projection();

  template <class U>
  Network<U> cast() const {
    Network<U> out(arch_, 0);
    std::vector<T> flat = params_.flatten();
    std::vector<U> conv(flat.begin(), flat.end());
    out.params().assign(conv);
    return out;
  }

 private:
  struct FilmSite {
    std::size_t width;
    std::size_t offset;
  };

  void build_mlp(std::uint64_t seed);
  void build_unet(std::uint64_t seed);
  std::size_t add_linear_params(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
                                double init_scale = 1.0);
  std::size_t add_conv_params(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                              std::uint64_t seed, double init_scale = 1.0);
  std::size_t add_film_site(std::size_t width);

  Var<T> dense(Graph<T>& g, Var<T> x, std::size_t first);
  Var<T> conv(Graph<T>& g, Var<T> x, std::size_t first);
  Var<T> modulate(Var<T> x, Var<T> film_out, std::size_t site);
  Var<T> conv_block(Graph<T>& g, Var<T> x, std::size_t first, Var<T> film_out, std::size_t site);
  Var<T> embed(Graph<T>& g, std::span<const int> horizons);

  Architecture arch_;
  ParamStore<T> params_;
  std::vector<FilmSite> film_sites_;
  std::size_t film_width_ = 0;
  std::size_t embed_first_ = 0;
  std::size_t input_first_ = 0;
  std::vector<std::size_t> block_first_;
  std::size_t output_first_ = 0;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace hwm::nn
