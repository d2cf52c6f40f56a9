#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

template <typename T>
struct GradCheckReport {
  T max_rel_err = T(0);
  std::string worst;       // "input#i[j]" of the worst coordinate
  std::string error;       // non-empty if evaluation hit a non-finite value
  bool ok(T tol) const { return error.empty() && max_rel_err <= tol; }
};

// Compares the reverse-mode gradient of f against central finite differences,
// element-wise over the given inputs. f must be a pure scalar-valued function
// of the inputs. When max_coords_per_input > 0, a seeded random subset of
// coordinates is probed per input; 0 probes every coordinate.
template <typename T>
GradCheckReport<T> grad_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                              std::vector<Tensor<T>> inputs, T step = T(1e-5),
                              long max_coords_per_input = 0, uint64_t coord_seed = 0) {
  GradCheckReport<T> rep;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  std::vector<std::vector<T>> analytic;
  try {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> out = f(inputs);
    tape.backward(out);
    for (auto& in : inputs) analytic.push_back(in.grad());
  } catch (const NumericError& e) {
    rep.error = e.what();
    return rep;
  }

  auto eval = [&]() -> T {
    Tensor<T> out = f(inputs);  // no tape active: pure forward
    return out.item();
  };

  Rng pick(mix_seed(coord_seed, 0x67c0ffee));
  try {
    for (size_t i = 0; i < inputs.size(); ++i) {
      auto& vals = inputs[i].data();
      std::vector<long> coords;
      long n = static_cast<long>(vals.size());
      if (max_coords_per_input > 0 && n > max_coords_per_input) {
        for (long c = 0; c < max_coords_per_input; ++c)
          coords.push_back(static_cast<long>(pick.integer(static_cast<uint64_t>(n))));
      } else {
        coords.resize(static_cast<size_t>(n));
        for (long c = 0; c < n; ++c) coords[static_cast<size_t>(c)] = c;
      }
      for (long j : coords) {
        T saved = vals[j];
        vals[j] = saved + step;
        T up = eval();
        vals[j] = saved - step;
        T down = eval();
        vals[j] = saved;
        T numeric = (up - down) / (T(2) * step);
        T a = analytic[i][j];
        T denom = std::max(T(1), std::max(std::abs(a), std::abs(numeric)));
        T rel = std::abs(a - numeric) / denom;
        if (rel > rep.max_rel_err) {
          rep.max_rel_err = rel;
          rep.worst = "input#" + std::to_string(i) + "[" + std::to_string(j) + "]";
        }
      }
    }
  } catch (const NumericError& e) {
    rep.error = e.what();
  }
  return rep;
}

}  // namespace nmt
