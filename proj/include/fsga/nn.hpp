#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "fsga/graph.hpp"
#include "fsga/rng.hpp"
#include "fsga/tensor.hpp"

namespace fsga {

// Named trainable tensors of one model. Deque keeps addresses stable, which
// Graph relies on when registering parameter leaves.
class ParamSet {
 public:
  struct Item {
    std::string name;
    Tensor value;
  };

  Tensor& add(std::string name, Tensor t) {
    items_.push_back({std::move(name), std::move(t)});
    return items_.back().value;
  }

  Tensor* find(std::string_view name) {
    for (auto& it : items_)
      if (it.name == name) return &it.value;
    return nullptr;
  }
  const Tensor* find(std::string_view name) const {
    for (const auto& it : items_)
      if (it.name == name) return &it.value;
    return nullptr;
  }

  size_t size() const { return items_.size(); }
  Item& operator[](size_t i) { return items_[i]; }
  const Item& operator[](size_t i) const { return items_[i]; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.value.numel();
    return n;
  }

 private:
  std::deque<Item> items_;
};

// He-style normal init for conv / dense weights.
inline void init_normal(Tensor& t, float std, Rng& rng) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal_f();
}

inline float he_std(int fan_in) { return std::sqrt(2.0f / static_cast<float>(fan_in)); }

// Adam over one ParamSet. Parameters that received no gradient in a step are
// skipped entirely (their moments do not advance), so disabled loss terms
// leave their heads untouched.
class Adam {
 public:
  Adam() = default;
  Adam(float lr, float beta1, float beta2, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(ParamSet& params) {
    m_.clear();
    v_.clear();
    for (auto& it : params) {
      m_.push_back(Tensor(it.value.shape()));
      v_.push_back(Tensor(it.value.shape()));
    }
    t_ = 0;
  }

  // Applies one update using gradients harvested from `g`.
  void step(ParamSet& params, const Graph& g) {
    if (m_.size() != params.size())
      throw std::logic_error("Adam::step called before attach");
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (size_t p = 0; p < params.size(); ++p) {
      const Tensor* grad = g.param_grad(&params[p].value);
      if (!grad) continue;
      Tensor& w = params[p].value;
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (int64_t i = 0; i < w.numel(); ++i) {
        const float gi = (*grad)[i];
        m[i] = beta1_ * m[i] + (1.0f - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0f - beta2_) * gi * gi;
        const float mh = static_cast<float>(m[i] / bc1);
        const float vh = static_cast<float>(v[i] / bc2);
        w[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  float lr() const { return lr_; }
  float beta1() const { return beta1_; }
  float beta2() const { return beta2_; }
  uint64_t steps_taken() const { return t_; }

  // Checkpoint access.
  std::deque<Tensor>& moments1() { return m_; }
  std::deque<Tensor>& moments2() { return v_; }
  const std::deque<Tensor>& moments1() const { return m_; }
  const std::deque<Tensor>& moments2() const { return v_; }
  void set_steps_taken(uint64_t t) { t_ = t; }
  bool attached_to(const ParamSet& params) const { return m_.size() == params.size(); }

 private:
  float lr_ = 1e-3f;
  float beta1_ = 0.0f;
  float beta2_ = 0.99f;
  float eps_ = 1e-8f;
  uint64_t t_ = 0;
  std::deque<Tensor> m_, v_;
};

}  // namespace fsga
