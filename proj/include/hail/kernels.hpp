#pragma once

// Batched forward/backward passes for TargetModel over sparse rows.
//
// Each kernel has an OpenMP version and a serial reference. The parallel
// versions partition work so that every floating-point accumulation runs in
// the same order regardless of thread count: rows are independent in the
// forward pass, and gradient sums are split across output coordinates, never
// across rows. Results are therefore reproducible run to run.

#include <span>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/target_model.hpp"

namespace hail::kernels {

// Hidden activations per layer, row-major [rows x width], plus output
// logits and probabilities.
struct Activations {
  std::vector<std::vector<double>> hidden;
  std::vector<double> logits;
  std::vector<double> probs;
};

void forward_serial(const TargetModel& model, std::span<const SparseRow* const> rows,
                    Activations& acts);
void forward_parallel(const TargetModel& model, std::span<const SparseRow* const> rows,
                      Activations& acts);

// Accumulates sum_r dlogit[r] * d logit_r / d params into grad (which must
// have model.num_params() entries; it is added to, not overwritten).
void backward_serial(const TargetModel& model, std::span<const SparseRow* const> rows,
                     const Activations& acts, std::span<const double> dlogit,
                     std::span<double> grad);
void backward_parallel(const TargetModel& model, std::span<const SparseRow* const> rows,
                       const Activations& acts, std::span<const double> dlogit,
                       std::span<double> grad);

inline void forward(const TargetModel& model, std::span<const SparseRow* const> rows,
                    Activations& acts, bool parallel) {
  parallel ? forward_parallel(model, rows, acts) : forward_serial(model, rows, acts);
}

inline void backward(const TargetModel& model, std::span<const SparseRow* const> rows,
                     const Activations& acts, std::span<const double> dlogit,
                     std::span<double> grad, bool parallel) {
  parallel ? backward_parallel(model, rows, acts, dlogit, grad)
           : backward_serial(model, rows, acts, dlogit, grad);
}

std::vector<double> predict_batch(const TargetModel& model, std::span<const SparseRow* const> rows,
                                  bool parallel);

double sigmoid(double z);

}  // namespace hail::kernels
