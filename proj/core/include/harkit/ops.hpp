#pragma once

#include <vector>

#include "harkit/tensor.hpp"

namespace harkit::ad {

// Elementwise; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// y = scale * x + shift, elementwise.
Tensor affine(const Tensor& x, Real scale, Real shift);

Tensor tanh_act(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor lrelu(const Tensor& x, Real negative_slope = 0.01);
// tanh(a) ⊙ sigmoid(b)
Tensor gated(const Tensor& a, const Tensor& b);
// Normalizes over the last (class) axis.
Tensor softmax(const Tensor& x);

Tensor matmul(const Tensor& x, const Tensor& w);
// y = xW + b with x:(n,d_in), W:(d_in,d_out), b:(d_out).
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);

// Cross-correlation over the time axis with "same"-style zero padding chosen
// so t_out = ceil(t / stride).
Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride);
// 2-D convolution: valid padding on the leading spatial axis
// (h_out = floor((h-kh)/sh)+1), time axis padded as conv1d.
Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride_h, int stride_t);
// Length-preserving causal convolution; taps reach back (k-1)*dilation samples.
Tensor dilated_causal_conv1d(const Tensor& x, const Tensor& kernels, int dilation);
// Adds b[c] to every element of channel c; x is (n, c, ...).
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
// Row i of a 2-D tensor as shape (1, cols).
Tensor row(const Tensor& x, int i);
// Rows in reverse order (2-D).
Tensor flip_rows(const Tensor& x);

// Mean negative log softmax probability of the target class.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

struct GruParams {
  Tensor wx;    // (d_in, 3h)  gate order [update | reset | candidate]
  Tensor wh_zr; // (h, 2h)
  Tensor wh_n;  // (h, h)
  Tensor b;     // (3h)
};

struct LstmParams {
  Tensor wx; // (d_in, 4h)  gate order [input | forget | cell | output]
  Tensor wh; // (h, 4h)
  Tensor b;  // (4h)
};

// h' = (1-z) ⊙ h + z ⊙ tanh(Wn x + Un (r ⊙ h)); sigmoid update/reset gates.
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p);
// Returns (h', c').
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p);

// Plain argmax over the last axis; not part of the graph.
std::vector<int> argmax_rows(const Tensor& x);

}  // namespace harkit::ad
