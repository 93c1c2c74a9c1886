#include "surt/numcore.hpp"

#include <algorithm>
#include <cmath>

namespace surt {

template <class T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> init) {
  if (contains(name)) fail(ErrorKind::BadConfig, "duplicate parameter " + name);
  index_.emplace(name, slots_.size());
  slots_.push_back(ParamSlot<T>{name, std::move(init), {}, {}, {}});
  return slots_.back().value;
}

template <class T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::GradientMissing, "unknown parameter " + name);
  return it->second;
}

template <class T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.value.size();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& s : slots_) {
    if (s.grad.shape() != s.value.shape()) {
      s.grad = Tensor<T>(s.value.shape());
    } else {
      s.grad.fill(T(0));
    }
  }
}

template <class T>
void ParamStore<T>::clear_grad() {
  for (auto& s : slots_) s.grad = Tensor<T>();
}

void ScheduleConfig::validate() const {
  if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
    fail(ErrorKind::BadConfig, "schedule requires 0 < warmup_steps < total_steps");
  }
  if (!(peak_lr > 0)) fail(ErrorKind::BadConfig, "schedule requires peak_lr > 0");
}

double lr_at_step(std::uint64_t step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step > cfg.total_steps) {
    fail(ErrorKind::OutOfSchedule, "step " + std::to_string(step) + " beyond total " + std::to_string(cfg.total_steps));
  }
  if (step <= cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double remaining = static_cast<double>(cfg.total_steps - step);
  return cfg.peak_lr * remaining / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

template <class T>
double clip_gradients(ParamStore<T>& store, double max_norm) {
  if (!(max_norm > 0)) fail(ErrorKind::BadConfig, "max_norm must be positive");
  double sq = 0.0;
  for (const auto& s : store.slots()) {
    for (T g : s.grad.values()) {
      if (!std::isfinite(g)) fail(ErrorKind::NonFiniteGradient, "gradient of " + s.name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& s : store.slots()) {
      for (T& g : s.grad.values()) g *= scale;
    }
  }
  return norm;
}

template <class T>
void optimizer_step(ParamStore<T>& store, double lr, const AdamWConfig& cfg) {
  if (lr < 0) fail(ErrorKind::BadConfig, "negative learning rate");
  for (const auto& s : store.slots()) {
    if (s.grad.shape() != s.value.shape()) fail(ErrorKind::GradientMissing, "no gradient for " + s.name);
  }
  store.advance_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& s : store.slots()) {
    if (s.moment1.shape() != s.value.shape()) s.moment1 = Tensor<T>(s.value.shape());
    if (s.moment2.shape() != s.value.shape()) s.moment2 = Tensor<T>(s.value.shape());
    T* p = s.value.data();
    const T* g = s.grad.data();
    T* m = s.moment1.data();
    T* v = s.moment2.data();
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      const double pi = p[i];
      p[i] = static_cast<T>(pi - lr * update - lr * cfg.weight_decay * pi);
    }
  }
}

GradCheckReport grad_check(const std::function<double(ParamStore<double>&)>& objective,
                           const std::function<void(ParamStore<double>&)>& analytic, ParamStore<double>& store,
                           const GradCheckOptions& opts) {
  store.zero_grad();
  analytic(store);
  GradCheckReport report;
  for (auto& s : store.slots()) {
    const std::size_t n = s.value.size();
    const std::size_t stride =
        (opts.max_coords_per_param == 0 || n <= opts.max_coords_per_param) ? 1 : (n + opts.max_coords_per_param - 1) / opts.max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = s.value[i];
      auto central = [&](double h) {
        s.value[i] = saved + h;
        const double fp = objective(store);
        s.value[i] = saved - h;
        const double fm = objective(store);
        s.value[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
          fail(ErrorKind::NonFiniteObjective, "objective at perturbed " + s.name);
        }
        return (fp - fm) / (2.0 * h);
      };
      const double numeric =
          opts.richardson ? (4.0 * central(0.5 * opts.h) - central(opts.h)) / 3.0 : central(opts.h);
      const double a = s.grad[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.coordinates;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        if (rel >= report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_param = s.name;
          report.worst_index = i;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.pass = report.max_rel_error < opts.tol;
  return report;
}

template class ParamStore<float>;
template class ParamStore<double>;
template double clip_gradients(ParamStore<float>&, double);
template double clip_gradients(ParamStore<double>&, double);
template void optimizer_step(ParamStore<float>&, double, const AdamWConfig&);
template void optimizer_step(ParamStore<double>&, double, const AdamWConfig&);

}  // namespace surt
