#include "hail/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace hail::kernels {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void resize_acts(const TargetModel& model, std::size_t n, Activations& acts) {
  acts.hidden.resize(model.hidden.size());
  for (std::size_t l = 0; l < model.hidden.size(); ++l) acts.hidden[l].assign(n * model.hidden[l], 0.0);
  acts.logits.assign(n, 0.0);
  acts.probs.assign(n, 0.0);
}

void check_row(const TargetModel& model, const SparseRow& row) {
  for (const auto& f : row)
    if (f.index < 0 || static_cast<std::size_t>(f.index) >= model.input_dim)
      throw std::out_of_range("feature index " + std::to_string(f.index) +
                              " outside model input dimension " + std::to_string(model.input_dim));
}

// Forward pass for one row; writes its hidden activations and logit.
void forward_row(const TargetModel& model, const std::vector<LayerShape>& shapes,
                 const SparseRow& row, std::size_t r, Activations& acts) {
  const double* p = model.params.data();
  const LayerShape& first = shapes.front();
  if (model.hidden.empty()) {
    double z = p[first.bias_offset];
    for (const auto& f : row) z += f.value * p[first.weight_offset + f.index];
    acts.logits[r] = z;
    acts.probs[r] = sigmoid(z);
    return;
  }
  {
    const std::size_t h = first.out;
    double* out = acts.hidden[0].data() + r * h;
    for (std::size_t j = 0; j < h; ++j) out[j] = p[first.bias_offset + j];
    for (const auto& f : row) {
      const double* w = p + first.weight_offset + static_cast<std::size_t>(f.index) * h;
      for (std::size_t j = 0; j < h; ++j) out[j] += f.value * w[j];
    }
    for (std::size_t j = 0; j < h; ++j) out[j] = std::tanh(out[j]);
  }
  for (std::size_t l = 1; l < shapes.size(); ++l) {
    const LayerShape& s = shapes[l];
    const double* in = acts.hidden[l - 1].data() + r * s.in;
    if (l + 1 == shapes.size()) {
      double z = p[s.bias_offset];
      for (std::size_t i = 0; i < s.in; ++i) z += in[i] * p[s.weight_offset + i];
      acts.logits[r] = z;
      acts.probs[r] = sigmoid(z);
    } else {
      double* out = acts.hidden[l].data() + r * s.out;
      for (std::size_t j = 0; j < s.out; ++j) out[j] = p[s.bias_offset + j];
      for (std::size_t i = 0; i < s.in; ++i) {
        const double* w = p + s.weight_offset + i * s.out;
        for (std::size_t j = 0; j < s.out; ++j) out[j] += in[i] * w[j];
      }
      for (std::size_t j = 0; j < s.out; ++j) out[j] = std::tanh(out[j]);
    }
  }
}

// Pre-activation deltas for each hidden layer of one row.
void row_deltas(const TargetModel& model, const std::vector<LayerShape>& shapes,
                const Activations& acts, double dz, std::size_t r,
                std::vector<std::vector<double>>& deltas) {
  const double* p = model.params.data();
  const std::size_t top = model.hidden.size() - 1;
  {
    const LayerShape& out = shapes.back();
    const double* h = acts.hidden[top].data() + r * out.in;
    double* d = deltas[top].data() + r * out.in;
    for (std::size_t j = 0; j < out.in; ++j)
      d[j] = dz * p[out.weight_offset + j] * (1.0 - h[j] * h[j]);
  }
  for (std::size_t l = top; l >= 1; --l) {
    const LayerShape& s = shapes[l];  // maps hidden[l-1] -> hidden[l]
    const double* d_up = deltas[l].data() + r * s.out;
    const double* h = acts.hidden[l - 1].data() + r * s.in;
    double* d = deltas[l - 1].data() + r * s.in;
    for (std::size_t i = 0; i < s.in; ++i) {
      const double* w = p + s.weight_offset + i * s.out;
      double acc = 0.0;
      for (std::size_t j = 0; j < s.out; ++j) acc += w[j] * d_up[j];
      d[i] = acc * (1.0 - h[i] * h[i]);
    }
  }
}

}  // namespace

void forward_serial(const TargetModel& model, std::span<const SparseRow* const> rows,
                    Activations& acts) {
  const auto shapes = model.layers();
  const std::size_t n = rows.size();
  resize_acts(model, n, acts);
  const double* p = model.params.data();
  for (std::size_t r = 0; r < n; ++r) check_row(model, *rows[r]);

  // Layer-major evaluation: a straightforward reference for the fused
  // per-row version used by the parallel kernel.
  if (model.hidden.empty()) {
    const LayerShape& s = shapes[0];
    for (std::size_t r = 0; r < n; ++r) {
      double z = p[s.bias_offset];
      for (const auto& f : *rows[r]) z += f.value * p[s.weight_offset + f.index];
      acts.logits[r] = z;
      acts.probs[r] = sigmoid(z);
    }
    return;
  }
  const LayerShape& s0 = shapes[0];
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < s0.out; ++j) {
      double a = p[s0.bias_offset + j];
      for (const auto& f : *rows[r])
        a += f.value * p[s0.weight_offset + static_cast<std::size_t>(f.index) * s0.out + j];
      acts.hidden[0][r * s0.out + j] = std::tanh(a);
    }
  }
  for (std::size_t l = 1; l < shapes.size(); ++l) {
    const LayerShape& s = shapes[l];
    const bool is_output = l + 1 == shapes.size();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < s.out; ++j) {
        double a = p[s.bias_offset + j];
        for (std::size_t i = 0; i < s.in; ++i)
          a += acts.hidden[l - 1][r * s.in + i] * p[s.weight_offset + i * s.out + j];
        if (is_output) {
          acts.logits[r] = a;
          acts.probs[r] = sigmoid(a);
        } else {
          acts.hidden[l][r * s.out + j] = std::tanh(a);
        }
      }
    }
  }
}

void forward_parallel(const TargetModel& model, std::span<const SparseRow* const> rows,
                      Activations& acts) {
  const auto shapes = model.layers();
  const std::size_t n = rows.size();
  resize_acts(model, n, acts);
  for (std::size_t r = 0; r < n; ++r) check_row(model, *rows[r]);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r) forward_row(model, shapes, *rows[r], r, acts);
}

void backward_serial(const TargetModel& model, std::span<const SparseRow* const> rows,
                     const Activations& acts, std::span<const double> dlogit,
                     std::span<double> grad) {
  if (grad.size() != model.num_params()) throw std::invalid_argument("backward: gradient size mismatch");
  const auto shapes = model.layers();
  const double* p = model.params.data();
  const std::size_t n_layers = shapes.size();
  std::vector<std::vector<double>> delta(n_layers);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double dz = dlogit[r];
    if (dz == 0.0) continue;
    // delta[l] holds d objective / d pre-activation of layer l's outputs.
    delta[n_layers - 1] = {dz};
    for (std::size_t l = n_layers - 1; l >= 1; --l) {
      const LayerShape& s = shapes[l];
      delta[l - 1].assign(s.in, 0.0);
      for (std::size_t i = 0; i < s.in; ++i) {
        const double h = acts.hidden[l - 1][r * s.in + i];
        double acc = 0.0;
        for (std::size_t j = 0; j < s.out; ++j) acc += p[s.weight_offset + i * s.out + j] * delta[l][j];
        delta[l - 1][i] = acc * (1.0 - h * h);
      }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      const LayerShape& s = shapes[l];
      for (std::size_t j = 0; j < s.out; ++j) grad[s.bias_offset + j] += delta[l][j];
      if (l == 0) {
        for (const auto& f : *rows[r])
          for (std::size_t j = 0; j < s.out; ++j)
            grad[s.weight_offset + static_cast<std::size_t>(f.index) * s.out + j] += f.value * delta[0][j];
      } else {
        for (std::size_t i = 0; i < s.in; ++i) {
          const double h = acts.hidden[l - 1][r * s.in + i];
          for (std::size_t j = 0; j < s.out; ++j) grad[s.weight_offset + i * s.out + j] += h * delta[l][j];
        }
      }
    }
  }
}

void backward_parallel(const TargetModel& model, std::span<const SparseRow* const> rows,
                       const Activations& acts, std::span<const double> dlogit,
                       std::span<double> grad) {
  if (grad.size() != model.num_params()) throw std::invalid_argument("backward: gradient size mismatch");
  const auto shapes = model.layers();
  const std::size_t n = rows.size();

  if (model.hidden.empty()) {
    // Sparse index collisions across rows; the logistic case is cheap enough
    // to accumulate in row order.
    const LayerShape& s = shapes[0];
    for (std::size_t r = 0; r < n; ++r) {
      const double dz = dlogit[r];
      if (dz == 0.0) continue;
      grad[s.bias_offset] += dz;
      for (const auto& f : *rows[r]) grad[s.weight_offset + f.index] += f.value * dz;
    }
    return;
  }

  const std::size_t n_hidden = model.hidden.size();
  std::vector<std::vector<double>> deltas(n_hidden);
  for (std::size_t l = 0; l < n_hidden; ++l) deltas[l].assign(n * model.hidden[l], 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r)
    if (dlogit[r] != 0.0) row_deltas(model, shapes, acts, dlogit[r], r, deltas);

  // Output unit.
  {
    const LayerShape& s = shapes.back();
    const auto& h = acts.hidden[n_hidden - 1];
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < s.in; ++j) {
      double& g = grad[s.weight_offset + j];
      for (std::size_t r = 0; r < n; ++r)
        if (dlogit[r] != 0.0) g += h[r * s.in + j] * dlogit[r];
    }
    for (std::size_t r = 0; r < n; ++r)
      if (dlogit[r] != 0.0) grad[s.bias_offset] += dlogit[r];
  }

  // Dense hidden-to-hidden layers; each thread owns whole weight rows.
  for (std::size_t l = 1; l < n_hidden; ++l) {
    const LayerShape& s = shapes[l];
    const auto& h = acts.hidden[l - 1];
    const auto& d = deltas[l];
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < s.in; ++i) {
      double* g = grad.data() + s.weight_offset + i * s.out;
      for (std::size_t r = 0; r < n; ++r) {
        if (dlogit[r] == 0.0) continue;
        const double hv = h[r * s.in + i];
        const double* dr = d.data() + r * s.out;
        for (std::size_t j = 0; j < s.out; ++j) g[j] += hv * dr[j];
      }
    }
  }
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const LayerShape& s = shapes[l];
    const auto& d = deltas[l];
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < s.out; ++j) {
      double& g = grad[s.bias_offset + j];
      for (std::size_t r = 0; r < n; ++r)
        if (dlogit[r] != 0.0) g += d[r * s.out + j];
    }
  }

  // Sparse input layer: threads split the hidden columns, each walking every
  // row in order, so no two threads touch the same gradient entry.
  {
    const LayerShape& s = shapes[0];
    const auto& d = deltas[0];
#pragma omp parallel
    {
      const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
      const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
      const std::size_t j0 = s.out * t / nt;
      const std::size_t j1 = s.out * (t + 1) / nt;
      if (j0 < j1) {
        for (std::size_t r = 0; r < n; ++r) {
          if (dlogit[r] == 0.0) continue;
          const double* dr = d.data() + r * s.out;
          for (const auto& f : *rows[r]) {
            double* g = grad.data() + s.weight_offset + static_cast<std::size_t>(f.index) * s.out;
            for (std::size_t j = j0; j < j1; ++j) g[j] += f.value * dr[j];
          }
        }
      }
    }
  }
}

std::vector<double> predict_batch(const TargetModel& model, std::span<const SparseRow* const> rows,
                                  bool parallel) {
  Activations acts;
  forward(model, rows, acts, parallel);
  return std::move(acts.probs);
}

}  // namespace hail::kernels
