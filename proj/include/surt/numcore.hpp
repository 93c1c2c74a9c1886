#pragma once
// Parameters, optimizer, learning-rate schedule, clipping, and the
// finite-difference gradient checker.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "surt/tensor.hpp"

namespace surt {

template <class T>
struct ParamSlot {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;    // empty until populated
  Tensor<T> moment1;
  Tensor<T> moment2;
};

// Named parameters with gradient and Adam moment slots, kept in insertion
// order so iteration (and therefore every reduction) is deterministic.
// Single writer: one updater at a time.
template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  ParamSlot<T>& slot(const std::string& name) { return slots_[index_of(name)]; }
  const ParamSlot<T>& slot(const std::string& name) const { return slots_[index_of(name)]; }
  Tensor<T>& value(const std::string& name) { return slot(name).value; }
  const Tensor<T>& value(const std::string& name) const { return slot(name).value; }
  Tensor<T>& grad(const std::string& name) { return slot(name).grad; }

  std::vector<ParamSlot<T>>& slots() { return slots_; }
  const std::vector<ParamSlot<T>>& slots() const { return slots_; }
  std::size_t size() const { return slots_.size(); }
  std::size_t parameter_count() const;

  // Allocates (or zeroes) every gradient slot.
  void zero_grad();
  // Drops gradient slots, leaving them "missing".
  void clear_grad();

  std::uint64_t step() const { return step_; }
  void advance_step() { ++step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& s : slots_) {
      auto& added = out.add(s.name, s.value.template cast<U>());
      (void)added;
      auto& dst = out.slot(s.name);
      if (!s.grad.empty()) dst.grad = s.grad.template cast<U>();
      if (!s.moment1.empty()) dst.moment1 = s.moment1.template cast<U>();
      if (!s.moment2.empty()) dst.moment2 = s.moment2.template cast<U>();
    }
    out.set_step(step_);
    return out;
  }

 private:
  std::vector<ParamSlot<T>> slots_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

struct ScheduleConfig {
  std::uint64_t warmup_steps = 100;
  double peak_lr = 3e-3;
  std::uint64_t total_steps = 2000;

  void validate() const;
};

// Linear warmup 0 -> peak over warmup_steps, then linear decay to 0 at total_steps.
double lr_at_step(std::uint64_t step, const ScheduleConfig& cfg);

// Scales every gradient by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
template <class T>
double clip_gradients(ParamStore<T>& store, double max_norm);

// Not stated for the reference recipe; exposed in config.
struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam update with bias correction.
template <class T>
void optimizer_step(ParamStore<T>& store, double lr, const AdamWConfig& cfg);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double h = 1e-6;
  double tol = 1e-4;
  // 0 checks every coordinate; otherwise a deterministic strided subset per tensor.
  std::size_t max_coords_per_param = 0;
  // Combine central differences at h and h/2 to cancel the h^2 error term,
  // which lets a larger h keep roundoff small on tiny gradients.
  bool richardson = false;
};

// Central differences against the analytic gradient left in store.grad by
// `analytic`. Relative error is |a-n| / max(1e-8, |a|+|n|).
GradCheckReport grad_check(const std::function<double(ParamStore<double>&)>& objective,
                           const std::function<void(ParamStore<double>&)>& analytic, ParamStore<double>& store,
                           const GradCheckOptions& opts = {});

}  // namespace surt
