// seqconf/shallow_net.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Single-hidden-layer network with a sigmoid hidden activation and a linear
// output, trained by mini-batch gradient descent on mean squared error. The
// same container backs the state autoencoders and the alignment predictor;
// a tag records what it was trained on.

#ifndef SEQCONF_SHALLOW_NET_HPP_
#define SEQCONF_SHALLOW_NET_HPP_

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "seqconf/common.hpp"

namespace seqconf {

enum class NetTag { kEncoderStates = 0, kDecoderStates = 1, kAlignmentPredictor = 2 };

inline std::string net_tag_name(NetTag tag) {
  switch (tag) {
    case NetTag::kEncoderStates: return "encoder-states";
    case NetTag::kDecoderStates: return "decoder-states";
    case NetTag::kAlignmentPredictor: return "alignment-predictor";
  }
  return "?";
}

template <typename S>
struct ShallowNet {
  Mat<S> w1;  // hidden×input
  Vec<S> b1;
  Mat<S> w2;  // output×hidden
  Vec<S> b2;
  NetTag tag = NetTag::kEncoderStates;

  int input_width() const { return static_cast<int>(w1.cols()); }
  int hidden_width() const { return static_cast<int>(w1.rows()); }
  int output_width() const { return static_cast<int>(w2.rows()); }
};

template <typename S>
ShallowNet<S> init_shallow_net(int input, int hidden, int output, NetTag tag,
                               std::uint64_t seed) {
  require(input >= 1 && hidden >= 1 && output >= 1, "invalid shallow net shape");
  ShallowNet<S> net;
  net.tag = tag;
  Rng rng(seed, "shallow/init");
  double lim1 = std::sqrt(6.0 / (input + hidden));
  double lim2 = std::sqrt(6.0 / (hidden + output));
  net.w1.resize(hidden, input);
  net.w2.resize(output, hidden);
  for (Eigen::Index c = 0; c < net.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < net.w1.rows(); ++r)
      net.w1(r, c) = static_cast<S>(rng.uniform(-lim1, lim1));
  for (Eigen::Index c = 0; c < net.w2.cols(); ++c)
    for (Eigen::Index r = 0; r < net.w2.rows(); ++r)
      net.w2(r, c) = static_cast<S>(rng.uniform(-lim2, lim2));
  net.b1 = Vec<S>::Zero(hidden);
  net.b2 = Vec<S>::Zero(output);
  return net;
}

// w2 * sigmoid(w1*v + b1) + b2
template <typename S>
Vec<S> shallow_forward(const ShallowNet<S>& net, const Vec<S>& v) {
  require(v.size() == net.w1.cols(), "shallow net input width mismatch");
  Vec<S> z = net.w1 * v + net.b1;
  Vec<S> h = (S(1) / (S(1) + (-z.array()).exp())).matrix();
  return net.w2 * h + net.b2;
}

// Row-wise forward over a batch (one input per row).
template <typename S>
Mat<S> shallow_forward_rows(const ShallowNet<S>& net, const Mat<S>& x) {
  require(x.cols() == net.w1.cols(), "shallow net input width mismatch");
  Mat<S> z = (x * net.w1.transpose()).rowwise() + net.b1.transpose();
  Mat<S> h = (S(1) / (S(1) + (-z.array()).exp())).matrix();
  return (h * net.w2.transpose()).rowwise() + net.b2.transpose();
}

// MSE over all entries of the batch; accumulates gradients. Returns the loss.
template <typename S>
double shallow_loss_and_grad(const ShallowNet<S>& net, const Mat<S>& x, const Mat<S>& t,
                             ShallowNet<S>& grad) {
  require(x.rows() == t.rows() && t.cols() == net.w2.rows(), "training batch shape mismatch");
  Mat<S> z = (x * net.w1.transpose()).rowwise() + net.b1.transpose();
  Mat<S> h = (S(1) / (S(1) + (-z.array()).exp())).matrix();
  Mat<S> y = (h * net.w2.transpose()).rowwise() + net.b2.transpose();
  Mat<S> r = y - t;
  const double denom = static_cast<double>(r.rows()) * static_cast<double>(r.cols());
  double loss = static_cast<double>(r.template cast<double>().squaredNorm()) / denom;
  Mat<S> dy = r * static_cast<S>(2.0 / denom);
  grad.w2.noalias() += dy.transpose() * h;
  grad.b2.noalias() += dy.colwise().sum().transpose();
  Mat<S> dh = dy * net.w2;
  Mat<S> dz = dh.array() * h.array() * (S(1) - h.array());
  grad.w1.noalias() += dz.transpose() * x;
  grad.b1.noalias() += dz.colwise().sum().transpose();
  return loss;
}

template <typename S>
double shallow_loss(const ShallowNet<S>& net, const Mat<S>& x, const Mat<S>& t) {
  Mat<S> r = shallow_forward_rows(net, x) - t;
  return static_cast<double>(r.template cast<double>().squaredNorm()) /
         (static_cast<double>(r.rows()) * static_cast<double>(r.cols()));
}

struct ShallowTrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int epochs = 20;
  std::uint64_t seed = 1;
};

template <typename S>
struct ShallowTrainResult {
  ShallowNet<S> net;
  std::vector<double> epoch_losses;  // mean loss per epoch
};

// Mini-batch SGD on (inputs, targets) rows. `net` gives the initial point, so
// EM callers can keep refining the same predictor across M-steps.
template <typename S>
std::vector<double> train_shallow(ShallowNet<S>& net, const Mat<S>& inputs,
                                  const Mat<S>& targets, const ShallowTrainConfig& cfg,
                                  Rng& order_rng) {
  require(inputs.rows() == targets.rows() && inputs.rows() > 0, "empty shallow training set");
  ShallowNet<S> grad = net;
  std::vector<double> epoch_losses;
  std::vector<int> order(static_cast<std::size_t>(inputs.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0;
    long batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      std::size_t n = std::min<std::size_t>(cfg.batch, order.size() - begin);
      Mat<S> x(n, inputs.cols()), t(n, targets.cols());
      for (std::size_t i = 0; i < n; ++i) {
        x.row(i) = inputs.row(order[begin + i]);
        t.row(i) = targets.row(order[begin + i]);
      }
      grad.w1.setZero();
      grad.b1.setZero();
      grad.w2.setZero();
      grad.b2.setZero();
      double loss = shallow_loss_and_grad(net, x, t, grad);
      require(std::isfinite(loss),
              "shallow net training diverged (non-finite loss); lower the learning rate");
      total += loss * static_cast<double>(n);
      batches += static_cast<long>(n);
      S lr = static_cast<S>(cfg.lr);
      net.w1 -= lr * grad.w1;
      net.b1 -= lr * grad.b1;
      net.w2 -= lr * grad.w2;
      net.b2 -= lr * grad.b2;
    }
    epoch_losses.push_back(total / static_cast<double>(batches));
  }
  return epoch_losses;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "SNET", version, scalar width, tag, shapes, tensors.

namespace detail {

inline void sn_put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t sn_get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "truncated net checkpoint: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <typename S>
void save_shallow_net(const ShallowNet<S>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write net checkpoint: " + path);
  out.write("SNET", 4);
  detail::sn_put_u32(out, 1);
  detail::sn_put_u32(out, sizeof(S));
  detail::sn_put_u32(out, static_cast<std::uint32_t>(net.tag));
  detail::sn_put_u32(out, static_cast<std::uint32_t>(net.input_width()));
  detail::sn_put_u32(out, static_cast<std::uint32_t>(net.hidden_width()));
  detail::sn_put_u32(out, static_cast<std::uint32_t>(net.output_width()));
  auto dump = [&out](const auto& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(S)));
  };
  dump(net.w1);
  dump(net.b1);
  dump(net.w2);
  dump(net.b2);
  require(out.good(), "write failed: " + path);
}

template <typename S>
ShallowNet<S> load_shallow_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read net checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "SNET", 4) == 0, "not a net checkpoint: " + path);
  require(detail::sn_get_u32(in, path) == 1, "unsupported net checkpoint version: " + path);
  require(detail::sn_get_u32(in, path) == sizeof(S),
          "net checkpoint scalar width mismatch: " + path);
  ShallowNet<S> net;
  net.tag = static_cast<NetTag>(detail::sn_get_u32(in, path));
  int input = static_cast<int>(detail::sn_get_u32(in, path));
  int hidden = static_cast<int>(detail::sn_get_u32(in, path));
  int output = static_cast<int>(detail::sn_get_u32(in, path));
  net.w1.resize(hidden, input);
  net.b1.resize(hidden);
  net.w2.resize(output, hidden);
  net.b2.resize(output);
  auto slurp = [&](auto& m) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(S)));
    require(in.good(), "truncated net checkpoint: " + path);
  };
  slurp(net.w1);
  slurp(net.b1);
  slurp(net.w2);
  slurp(net.b2);
  return net;
}

}  // namespace seqconf

#endif  // SEQCONF_SHALLOW_NET_HPP_
