#include "vmp/nn/params.hpp"

#include <cmath>

#include "vmp/error.hpp"

namespace vmp::nn {

Tensor& ParamStore::create(const std::string& name, std::size_t rows, std::size_t cols) {
  if (entries_.count(name)) throw ValueError("param store: duplicate name " + name);
  Entry e;
  e.value = Tensor::zeros({rows, cols});
  e.grad = Tensor::zeros({rows, cols});
  e.m = Tensor::zeros({rows, cols});
  e.v = Tensor::zeros({rows, cols});
  return entries_.emplace(name, std::move(e)).first->second.value;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValueError("param store: unknown name " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValueError("param store: unknown name " + name);
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return find(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return find(name).value; }
const Tensor& ParamStore::grad(const std::string& name) const { return find(name).grad; }

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
  Entry& e = find(name);
  if (!e.grad.same_shape(g)) throw ValueError("param store: gradient shape mismatch for " + name);
  for (std::size_t i = 0; i < g.values.size(); ++i) e.grad.values[i] += g.values[i];
  grads_populated_ = true;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_)
    for (double& v : e.grad.values) v = 0.0;
  grads_populated_ = false;
}

void ParamStore::scale_grads(double c) {
  for (auto& [name, e] : entries_)
    for (double& v : e.grad.values) v *= c;
}

void ParamStore::adam_step(double lr, const AdamConfig& cfg) {
  if (!grads_populated_) throw ValueError("adam_step: no gradients accumulated since last zero_grads");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [name, e] : entries_) {
    for (std::size_t i = 0; i < e.value.values.size(); ++i) {
      const double g = e.grad.values[i];
      e.m.values[i] = cfg.beta1 * e.m.values[i] + (1.0 - cfg.beta1) * g;
      e.v.values[i] = cfg.beta2 * e.v.values[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m.values[i] / bc1;
      const double vhat = e.v.values[i] / bc2;
      e.value.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (!std::isfinite(e.value.values[i]))
        throw NumericError("adam_step: parameter " + name + " became non-finite");
    }
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

void validate_schedule(const LrSchedule& s) {
  if (!(s.gamma > 0.0 && s.gamma <= 1.0)) throw ValueError("lr schedule: gamma must be in (0, 1]");
  for (std::size_t i = 1; i < s.milestones.size(); ++i)
    if (s.milestones[i] <= s.milestones[i - 1])
      throw ValueError("lr schedule: milestones must be strictly increasing");
}

double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0) throw ValueError("lr_at: negative epoch");
  int decays = 0;
  for (int m : s.milestones)
    if (m <= epoch) ++decays;
  return s.initial * std::pow(s.gamma, static_cast<double>(decays));
}

}  // namespace vmp::nn
