#pragma once

#include <map>
#include <string>
#include <vector>

#include "vmp/nn/tensor.hpp"

namespace vmp::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter set with per-parameter gradient slot and Adam moments.
// One writer during training; immutable once training ends.
class ParamStore {
 public:
  Tensor& create(const std::string& name, std::size_t rows, std::size_t cols);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  const Tensor& grad(const std::string& name) const;

  void accumulate_grad(const std::string& name, const Tensor& g);
  void zero_grads();
  void scale_grads(double c);

  // Standard Adam update over every parameter; moments persist across calls.
  void adam_step(double lr, const AdamConfig& cfg = {});

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  long step_count() const { return step_; }

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  Entry& find(const std::string& name);
  const Entry& find(const std::string& name) const;

  std::map<std::string, Entry> entries_;
  long step_ = 0;
  bool grads_populated_ = false;
};

struct LrSchedule {
  double initial = 0.001;
  std::vector<int> milestones;  // strictly increasing epochs
  double gamma = 0.3;           // in (0, 1]
};

void validate_schedule(const LrSchedule& s);

// initial * gamma^(number of milestones <= epoch)
double lr_at(const LrSchedule& s, int epoch);

}  // namespace vmp::nn
