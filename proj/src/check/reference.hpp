#pragma once

// Straightforward double-precision forward passes used by the gradient
// checker. Nothing here is fast; everything here is easy to audit. Loops
// follow the definitions directly so the results can serve as a second,
// independent implementation of the float kernels.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vxseg/autograd.hpp"
#include "vxseg/adversary.hpp"
#include "vxseg/di2in.hpp"

namespace vxseg::reference {

struct Vol {
  std::array<std::int64_t, 5> shape{};  // N, C, D, H, W
  std::vector<double> v;

  Vol() = default;
  explicit Vol(std::array<std::int64_t, 5> s) : shape(s), v(count(s), 0.0) {}
  static std::size_t count(const std::array<std::int64_t, 5>& s) {
    return static_cast<std::size_t>(s[0] * s[1] * s[2] * s[3] * s[4]);
  }
  std::int64_t spatial() const { return shape[2] * shape[3] * shape[4]; }
};

Vol from_tensor(const Tensor& t);

// Parameter values in double, keyed by the names of a ParameterSet.
class Params {
 public:
  explicit Params(const ParameterSet& ps);
  const std::vector<double>& get(const std::string& name) const;
  std::vector<double>& get(const std::string& name);

 private:
  std::map<std::string, std::vector<double>> values_;
};

// Records the sign of every leaky-ReLU input so callers can tell whether a
// perturbation moved any unit across the kink.
using SignTrace = std::vector<std::uint8_t>;

Vol conv3d(const Vol& x, const std::vector<double>& w, const std::vector<double>* bias,
           std::int64_t filters, int stride);
Vol leaky_relu(const Vol& x, double alpha, SignTrace* trace);
Vol batch_norm_train(const Vol& x, const std::vector<double>& gamma,
                     const std::vector<double>& beta, double epsilon);
Vol upscale(const Vol& x, int factor);
Vol concat(const std::vector<const Vol*>& parts);
Vol sigmoid(const Vol& x);
double bce(const Vol& p, const Tensor& target);

struct Di2inMaps {
  Vol final_prob;
  std::vector<Vol> branch_probs;
};

// Train-mode (batch-statistics) forward pass of the generator topology.
Di2inMaps di2in_forward(const Di2inSpec& spec, const Params& p, const Tensor& input,
                        double bn_epsilon, SignTrace* trace);
double di2in_loss(const Di2inSpec& spec, const Params& p, const Tensor& input,
                  const Tensor& label, double bn_epsilon, SignTrace* trace);

// Train-mode discriminator over a [N,C,D,H,W] batch; returns D(Y) per item.
std::vector<double> discriminator_forward(const DiscriminatorSpec& spec, const Params& p,
                                          const Tensor& maps, double bn_epsilon, SignTrace* trace);
// l_D with the first n_gt batch items as ground truth, the rest as predictions.
double discriminator_loss(const DiscriminatorSpec& spec, const Params& p, const Tensor& maps,
                          std::int64_t n_gt, double bn_epsilon, SignTrace* trace);

}  // namespace vxseg::reference
