#pragma once

// Adam with explicit, serialisable state. Moments are kept per parameter in
// registration order so a checkpoint can store and restore them bit-exactly.

#include <torch/torch.h>

#include <string>
#include <vector>

namespace fogscene {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

/// Learning rate over a run of iterations [begin, end): constant, or
/// polynomial decay lr·(1 − t/T)^0.9 with t = it − begin, T = end − begin.
enum class LrSchedule { kConstant, kPoly };
std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);
double scheduled_lr(double base, LrSchedule s, std::int64_t it, std::int64_t begin,
                    std::int64_t end);

/// Output of one bias-corrected Adam step on scalars; used by tests as the
/// hand-computed reference.
struct AdamScalarStep {
  double param, m, v;
};
AdamScalarStep adam_scalar_step(double param, double grad, double m, double v,
                                std::int64_t step, const AdamOptions& opt);

class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, AdamOptions opt);

  void zero_grad();
  /// Parameters without a gradient are skipped and keep their step count.
  void step();

  const AdamOptions& options() const { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }
  const std::vector<torch::Tensor>& params() const { return params_; }

  struct State {
    std::vector<torch::Tensor> exp_avg, exp_avg_sq;
    std::vector<std::int64_t> steps;
  };
  const State& state() const { return state_; }
  /// Throws FormatError when the shapes do not match the parameters.
  void load_state(State s);

 private:
  std::vector<torch::Tensor> params_;
  AdamOptions opt_;
  State state_;
};

}  // namespace fogscene
