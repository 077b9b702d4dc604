#pragma once

#include <utility>
#include <vector>

#include "grfu/autodiff.hpp"
#include "grfu/tensor.hpp"

namespace grfu {

// All step functions are pure: (params, inputs at t, prior state) -> (new
// state, trace). Inputs and states may be vectors ([d]) or column-batched
// matrices ([d x B]); the math is identical per column.

/// One LSTM block: W_* [d_h x d_in], U_* [d_h x d_h], b_* [d_h] for the
/// forget / input / output / cell gates.
struct LstmParams {
  Tensor w_f, u_f, b_f;
  Tensor w_i, u_i, b_i;
  Tensor w_o, u_o, b_o;
  Tensor w_g, u_g, b_g;

  int hidden_dim() const { return w_f.dim(0); }
  int input_dim() const { return w_f.dim(1); }
};

struct CellState {
  Tensor h, c;
};

CellState zero_state(int hidden_dim);
CellState zero_state(int hidden_dim, int batch);

struct GateActivations {
  Tensor f, i, o, g;
};

/// Per-step diagnostics: gate activations per sensor plus, for gated cells,
/// the effective fusion gates q^i (elementwise simplex across sensors).
struct StepTrace {
  std::vector<GateActivations> gates;
  std::vector<Tensor> fusion;
};

enum class FuseMode { Add, Concat };
enum class LateCombine { ConcatOut, AddOut };
enum class ResidualStrategy { SumComplement, ProductComplement, Softmax };

/// Paper default: the three-sensor experiments assign the last sensor the
/// product complement, two-sensor ones the plain complement.
ResidualStrategy default_residual(int sensors);

struct EncoderParams {
  std::vector<Tensor> w;  // W_e^i [d_e x d_s_i], no bias
};

struct FusionGateParams {
  std::vector<std::vector<Tensor>> w;  // w[k][i] = W_p^{k,i} [d_e x d_e]
  ResidualStrategy residual = ResidualStrategy::SumComplement;
};

/// Sigmoid gates p^k plus the pre-sigmoid logits (the softmax residual
/// strategy needs the logits).
struct FusionGates {
  std::vector<Tensor> p;
  std::vector<Tensor> logits;
};

struct MultiCellParams {
  std::vector<LstmParams> cells;  // one per sensor, or a single shared core
  EncoderParams encoders;
  FusionGateParams gates;
};

std::pair<CellState, StepTrace> lstm_step(const LstmParams& params, const Tensor& x,
                                          const CellState& state);

/// Early fusion of already-encoded sensors: elementwise sum or concatenation
/// in sensor order. A single sensor passes through unchanged.
Tensor erf_fuse(const std::vector<Tensor>& encodings, FuseMode mode);

std::pair<CellState, StepTrace> erf_step(const LstmParams& params,
                                         const std::vector<Tensor>& encodings, FuseMode mode,
                                         const CellState& state);

struct LateStepResult {
  std::vector<CellState> states;  // per-sensor, evolve independently
  Tensor combined_h;
  StepTrace trace;
};

/// Independent per-sensor LSTMs ("late" baselines): no weight or state
/// sharing; outputs combined by concat or sum.
LateStepResult late_parallel_step(const MultiCellParams& params,
                                  const std::vector<Tensor>& encodings,
                                  const std::vector<CellState>& states, LateCombine mode);

/// Late recurrent summation: every sensor's block reads the shared previous
/// (h, c); the new state is the elementwise sum of the per-sensor states.
std::pair<CellState, StepTrace> lrs_step(const MultiCellParams& params,
                                         const std::vector<Tensor>& encodings,
                                         const CellState& shared);

/// relu(W_e * s): projects a raw sensor input to the common encoding size.
Tensor encode(const Tensor& sensor_input, const Tensor& w_e);

/// p^k = sigmoid(sum_i W_p^{k,i} * e^i) for k in [1, M-1]. Needs M >= 2.
FusionGates fusion_gates(const std::vector<Tensor>& encodings, const FusionGateParams& params);

/// Resolves the M-1 learned gates into M effective per-sensor gates q^i that
/// form a simplex at every element position. `gate_shape` is the common
/// encoding shape (used for the M=1 all-ones case).
std::vector<Tensor> effective_gates(const FusionGates& gates, ResidualStrategy strategy,
                                    int sensors, const Shape& gate_shape);

/// Early gated recurrent fusion: one recurrent core reads the gated
/// interpolation a_t = sum_i q^i (x) e^i of the sensor encodings.
std::pair<CellState, StepTrace> egrf_step(const MultiCellParams& params,
                                          const std::vector<Tensor>& raw_inputs,
                                          const CellState& state);

/// Late gated recurrent fusion: gating controls each encoding's exposure to
/// its own sensor block (a^i = q^i (x) e^i), blocks share the previous state,
/// and the per-sensor states are summed.
std::pair<CellState, StepTrace> lgrf_step(const MultiCellParams& params,
                                          const std::vector<Tensor>& raw_inputs,
                                          const CellState& shared);

}  // namespace grfu
