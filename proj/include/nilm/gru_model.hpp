// SPDX-License-Identifier: Apache-2.0
//
// Seq2point regressor: one gated recurrent layer reads the 2T-step aggregate
// window one scalar at a time, its final hidden state feeds a stack of dense
// LeakyReLU layers and a linear head with one output per appliance.
//
// Gated cell, per step t with scalar input x_t and previous state h:
//   z = sigmoid(x_t * wx_z + h * U_z + b_z)
//   r = sigmoid(x_t * wx_r + h * U_r + b_r)
//   n = tanh(x_t * wx_n + (r .* h) * U_n + b_n)
//   h' = (1 - z) .* n + z .* h
//
// Flat parameter layout (column-major blocks, in this order):
//   wx   3H          input weights, gates ordered [z | r | n]
//   U    H x 3H      recurrent weights, column blocks [U_z | U_r | U_n]
//   b    3H          gate biases
//   per dense layer: W (in x out), b (out)
//   head: W (in x A), b (A)
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilm/errors.hpp"
#include "nilm/parameters.hpp"
#include "nilm/rng.hpp"

namespace nilm {

struct ModelSpec {
  std::size_t input_len = 120; // 2T
  std::size_t output_len = 1;  // A
  std::size_t recurrent_hidden = 64;
  std::vector<std::size_t> dense_widths{480};
  double leaky_slope = 0.01;

  void validate() const {
    require(input_len >= 1, "model input_len must be positive");
    require(output_len >= 1, "model output_len must be positive");
    require(recurrent_hidden >= 1, "model recurrent_hidden must be positive");
    for (auto w : dense_widths)
      require(w >= 1, "dense layer widths must be positive");
    require(std::isfinite(leaky_slope) && leaky_slope >= 0.0,
            "leaky_slope must be finite and non-negative");
  }

  friend bool operator==(const ModelSpec &, const ModelSpec &) = default;
};

inline std::size_t parameter_count(const ModelSpec &spec) {
  const std::size_t h = spec.recurrent_hidden;
  std::size_t d = 3 * h + 3 * h * h + 3 * h;
  std::size_t in = h;
  for (auto width : spec.dense_widths) {
    d += in * width + width;
    in = width;
  }
  return d + in * spec.output_len + spec.output_len;
}

class Seq2PointGru {
public:
  explicit Seq2PointGru(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t h = spec_.recurrent_hidden;
    wx_offset_ = 0;
    u_offset_ = 3 * h;
    b_offset_ = u_offset_ + 3 * h * h;
    std::size_t offset = b_offset_ + 3 * h;
    std::size_t in = h;
    auto add_layer = [&](std::size_t out) {
      layers_.push_back({in, out, offset, offset + in * out});
      offset += in * out + out;
      in = out;
    };
    for (auto width : spec_.dense_widths)
      add_layer(width);
    add_layer(spec_.output_len);
    count_ = offset;
  }

  const ModelSpec &spec() const { return spec_; }
  std::size_t parameter_count() const { return count_; }

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  ParameterVector init_params(std::uint64_t seed) const {
    ParameterVector w(count_);
    Rng rng = make_rng(seed);
    auto fill = [&](std::size_t offset, std::size_t n, std::size_t fan_in) {
      const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-s, s);
      for (std::size_t i = 0; i < n; ++i)
        w.values[static_cast<Eigen::Index>(offset + i)] = dist(rng);
    };
    const std::size_t h = spec_.recurrent_hidden;
    fill(wx_offset_, 3 * h, 1);
    fill(u_offset_, 3 * h * h, h);
    for (const auto &l : layers_)
      fill(l.w_offset, l.in * l.out, l.in);
    return w;
  }

  Eigen::MatrixXd forward(const ParameterVector &w,
                          const Eigen::MatrixXd &inputs) const {
    check_params(w);
    check_inputs(inputs);
    return run_forward(w, inputs, nullptr);
  }

  /// Mean over rows and outputs of the squared error.
  double loss(const ParameterVector &w, const Batch &batch) const {
    check_params(w);
    check_batch(batch);
    const Eigen::MatrixXd y = run_forward(w, batch.inputs, nullptr);
    return (y - batch.targets).squaredNorm() / element_count(batch);
  }

  LossAndGradient loss_and_gradient(const ParameterVector &w,
                                    const Batch &batch) const {
    check_params(w);
    check_batch(batch);
    LossAndGradient out{0.0, ParameterVector(count_)};
    double sse = 0.0;
    const Eigen::Index rows = batch.rows();
    // Row chunks bound the memory of the stored recurrence.
    for (Eigen::Index start = 0; start < rows; start += kChunkRows) {
      const Eigen::Index len = std::min(kChunkRows, rows - start);
      const Eigen::MatrixXd x = batch.inputs.middleRows(start, len);
      Trace trace;
      const Eigen::MatrixXd y = run_forward(w, x, &trace);
      const Eigen::MatrixXd residual = y - batch.targets.middleRows(start, len);
      sse += residual.squaredNorm();
      backward(w, x, trace, 2.0 * residual, out.gradient);
    }
    const double scale = 1.0 / element_count(batch);
    out.loss = sse * scale;
    out.gradient.values *= scale;
    return out;
  }

  ParameterVector gradient(const ParameterVector &w, const Batch &batch) const {
    return loss_and_gradient(w, batch).gradient;
  }

private:
  struct Layer {
    std::size_t in, out, w_offset, b_offset;
  };

  struct Trace {
    std::vector<Eigen::MatrixXd> h_prev;    // per step, B x H
    std::vector<Eigen::MatrixXd> gates_zr;  // per step, B x 2H (post-sigmoid)
    std::vector<Eigen::MatrixXd> candidate; // per step, B x H (post-tanh)
    std::vector<Eigen::MatrixXd> layer_in;  // per dense/head layer
    std::vector<Eigen::MatrixXd> layer_pre; // per dense layer, pre-activation
  };

  static constexpr Eigen::Index kChunkRows = 256;

  using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;
  using Mat = Eigen::Map<Eigen::MatrixXd>;
  using Vec = Eigen::Map<Eigen::VectorXd>;

  double element_count(const Batch &batch) const {
    return static_cast<double>(batch.rows()) *
           static_cast<double>(spec_.output_len);
  }

  void check_params(const ParameterVector &w) const {
    require(w.size() == count_, "parameter vector has length " +
                                    std::to_string(w.size()) + ", model needs " +
                                    std::to_string(count_));
  }

  void check_inputs(const Eigen::MatrixXd &inputs) const {
    require(static_cast<std::size_t>(inputs.cols()) == spec_.input_len,
            "input width " + std::to_string(inputs.cols()) +
                " does not match model input_len " +
                std::to_string(spec_.input_len));
  }

  void check_batch(const Batch &batch) const {
    require(batch.rows() > 0, "empty batch");
    check_inputs(batch.inputs);
    require(batch.targets.rows() == batch.inputs.rows(),
            "batch inputs and targets have different row counts");
    require(static_cast<std::size_t>(batch.targets.cols()) == spec_.output_len,
            "target width " + std::to_string(batch.targets.cols()) +
                " does not match model output_len " +
                std::to_string(spec_.output_len));
  }

  static Eigen::MatrixXd sigmoid(const Eigen::MatrixXd &a) {
    return (1.0 + (-a.array()).exp()).inverse().matrix();
  }

  Eigen::MatrixXd run_forward(const ParameterVector &w,
                              const Eigen::MatrixXd &x, Trace *trace) const {
    const auto H = static_cast<Eigen::Index>(spec_.recurrent_hidden);
    const auto steps = static_cast<Eigen::Index>(spec_.input_len);
    const double *p = w.values.data();
    const ConstVec wx(p + wx_offset_, 3 * H);
    const ConstMat U(p + u_offset_, H, 3 * H);
    const ConstVec b(p + b_offset_, 3 * H);

    const Eigen::Index B = x.rows();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(B, H);
    if (trace) {
      trace->h_prev.reserve(static_cast<std::size_t>(steps));
      trace->gates_zr.reserve(static_cast<std::size_t>(steps));
      trace->candidate.reserve(static_cast<std::size_t>(steps));
    }
    Eigen::MatrixXd zr(B, 2 * H), n(B, H);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const auto xt = x.col(t);
      zr.noalias() = h * U.leftCols(2 * H);
      zr.noalias() += xt * wx.head(2 * H).transpose();
      zr.rowwise() += b.head(2 * H).transpose();
      zr = sigmoid(zr);

      const Eigen::MatrixXd rh = zr.rightCols(H).cwiseProduct(h);
      n.noalias() = rh * U.rightCols(H);
      n.noalias() += xt * wx.tail(H).transpose();
      n.rowwise() += b.tail(H).transpose();
      n = n.array().tanh().matrix();

      Eigen::MatrixXd next = n + zr.leftCols(H).cwiseProduct(h - n);
      if (trace) {
        trace->h_prev.push_back(std::move(h));
        trace->gates_zr.push_back(zr);
        trace->candidate.push_back(n);
      }
      h = std::move(next);
    }

    Eigen::MatrixXd a = std::move(h);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer &layer = layers_[l];
      const ConstMat W(p + layer.w_offset, static_cast<Eigen::Index>(layer.in),
                       static_cast<Eigen::Index>(layer.out));
      const ConstVec bias(p + layer.b_offset, static_cast<Eigen::Index>(layer.out));
      Eigen::MatrixXd pre = a * W;
      pre.rowwise() += bias.transpose();
      if (trace)
        trace->layer_in.push_back(std::move(a));
      if (l + 1 == layers_.size())
        return pre; // linear head
      const double slope = spec_.leaky_slope;
      a = pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
      if (trace)
        trace->layer_pre.push_back(std::move(pre));
    }
    return a; // unreachable: the head is always present
  }

  // Accumulates d(sum of squared errors)/dw into grad given dy = dSSE/dy.
  void backward(const ParameterVector &w, const Eigen::MatrixXd &x,
                const Trace &trace, const Eigen::MatrixXd &dy,
                ParameterVector &grad) const {
    const auto H = static_cast<Eigen::Index>(spec_.recurrent_hidden);
    const auto steps = static_cast<Eigen::Index>(spec_.input_len);
    const double *p = w.values.data();
    double *g = grad.values.data();

    Eigen::MatrixXd da = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Layer &layer = layers_[l];
      const auto in = static_cast<Eigen::Index>(layer.in);
      const auto out = static_cast<Eigen::Index>(layer.out);
      Eigen::MatrixXd dpre;
      if (l + 1 == layers_.size()) {
        dpre = std::move(da);
      } else {
        const double slope = spec_.leaky_slope;
        dpre = da.cwiseProduct(trace.layer_pre[l].unaryExpr(
            [slope](double v) { return v > 0.0 ? 1.0 : slope; }));
      }
      Mat(g + layer.w_offset, in, out).noalias() +=
          trace.layer_in[l].transpose() * dpre;
      Vec(g + layer.b_offset, out) += dpre.colwise().sum().transpose();
      da.noalias() = dpre * ConstMat(p + layer.w_offset, in, out).transpose();
    }

    const ConstMat U(p + u_offset_, H, 3 * H);
    Vec gwx(g + wx_offset_, 3 * H);
    Mat gU(g + u_offset_, H, 3 * H);
    Vec gb(g + b_offset_, 3 * H);

    Eigen::MatrixXd dh = std::move(da);
    Eigen::MatrixXd dzr(dh.rows(), 2 * H);
    for (Eigen::Index t = steps; t-- > 0;) {
      const auto idx = static_cast<std::size_t>(t);
      const Eigen::MatrixXd &hp = trace.h_prev[idx];
      const Eigen::MatrixXd &zr = trace.gates_zr[idx];
      const Eigen::MatrixXd &n = trace.candidate[idx];
      const auto z = zr.leftCols(H);
      const auto r = zr.rightCols(H);
      const auto xt = x.col(t);

      const Eigen::MatrixXd dn_pre =
          (dh.array() * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
      const Eigen::MatrixXd dz = dh.cwiseProduct(hp - n);
      Eigen::MatrixXd dhp = dh.cwiseProduct(z);

      gwx.tail(H).noalias() += dn_pre.transpose() * xt;
      gb.tail(H) += dn_pre.colwise().sum().transpose();
      gU.rightCols(H).noalias() += r.cwiseProduct(hp).transpose() * dn_pre;
      const Eigen::MatrixXd drh = dn_pre * U.rightCols(H).transpose();
      dhp += drh.cwiseProduct(r);

      dzr.leftCols(H) =
          (dz.array() * z.array() * (1.0 - z.array())).matrix();
      dzr.rightCols(H) =
          (drh.array() * hp.array() * r.array() * (1.0 - r.array())).matrix();
      gwx.head(2 * H).noalias() += dzr.transpose() * xt;
      gb.head(2 * H) += dzr.colwise().sum().transpose();
      gU.leftCols(2 * H).noalias() += hp.transpose() * dzr;
      dhp.noalias() += dzr * U.leftCols(2 * H).transpose();
      dh = std::move(dhp);
    }
  }

  ModelSpec spec_;
  std::size_t wx_offset_ = 0, u_offset_ = 0, b_offset_ = 0, count_ = 0;
  std::vector<Layer> layers_; // dense layers followed by the head
};

inline ParameterVector init_params(const ModelSpec &spec, std::uint64_t seed) {
  return Seq2PointGru(spec).init_params(seed);
}

inline Eigen::MatrixXd forward(const ModelSpec &spec, const ParameterVector &w,
                               const Eigen::MatrixXd &inputs) {
  return Seq2PointGru(spec).forward(w, inputs);
}

inline double loss(const ModelSpec &spec, const ParameterVector &w,
                   const Batch &batch) {
  return Seq2PointGru(spec).loss(w, batch);
}

inline ParameterVector grad(const ModelSpec &spec, const ParameterVector &w,
                            const Batch &batch) {
  return Seq2PointGru(spec).gradient(w, batch);
}

} // namespace nilm
