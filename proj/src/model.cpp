#include "handseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "handseg/error.hpp"
#include "handseg/fileio.hpp"
#include "handseg/rng.hpp"

namespace handseg {

const char* to_string(View view) {
  switch (view) {
    case View::jcd: return "jcd";
    case View::slow: return "slow";
    case View::fast: return "fast";
  }
  return "jcd";
}

const char* to_string(Head head) {
  switch (head) {
    case Head::sdn: return "sdn";
    case Head::fine: return "fine";
    case Head::start: return "start";
    case Head::end: return "end";
    case Head::gc: return "gc";
  }
  return "sdn";
}

int ModelSpec::view_rows(View v) const {
  return v == View::jcd ? pair_count(joints) : motion_rows(joints, motion);
}

int ModelSpec::view_cols(View v) const {
  switch (v) {
    case View::jcd: return window;
    case View::slow: return window - 1;
    case View::fast: return window / 2 - 1;
  }
  return window;
}

int ModelSpec::head_outputs(Head h) const {
  switch (h) {
    case Head::sdn: return 3;
    case Head::fine: return num_classes;
    case Head::start:
    case Head::end:
    case Head::gc: return 1;
  }
  return 1;
}

void validate(const ModelSpec& spec) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Spec, what); };
  if (spec.window < 4 || spec.window % 2 != 0) bad("window must be even and >= 4");
  if (spec.joints < 2) bad("joints must be >= 2");
  if (spec.num_classes < 2) bad("num_classes must be >= 2");
  if (!(spec.feature_scale > 0.0)) bad("feature scale must be positive");
  if (spec.embed_channels != kRequiredEmbedChannels) {
    bad("encoders must map every view to (W/2, 8); got embedding width " +
        std::to_string(spec.embed_channels));
  }
  for (const auto* list : {&spec.encoder_convs, &spec.head_convs}) {
    for (const auto& c : *list) {
      if (c.channels < 1) bad("convolution channels must be >= 1");
      if (c.kernel < 1 || c.kernel % 2 == 0) bad("convolution kernels must be odd");
    }
  }
}

std::vector<ParamGroup> parameter_layout(const ModelSpec& spec) {
  validate(spec);
  std::vector<ParamGroup> groups;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape, int owner) {
    std::size_t size = 1;
    for (int d : shape) size *= static_cast<std::size_t>(d);
    groups.push_back({std::move(name), std::move(shape), offset, size, owner});
    offset += size;
  };
  for (int v = 0; v < kNumViews; ++v) {
    const std::string prefix = std::string("enc.") + to_string(static_cast<View>(v));
    int in = spec.view_rows(static_cast<View>(v));
    for (std::size_t i = 0; i < spec.encoder_convs.size(); ++i) {
      const auto& c = spec.encoder_convs[i];
      add(prefix + ".conv" + std::to_string(i) + ".w", {c.channels, in, c.kernel}, -1);
      add(prefix + ".conv" + std::to_string(i) + ".b", {c.channels}, -1);
      in = c.channels;
    }
    add(prefix + ".proj.w", {spec.embed_channels, in}, -1);
    add(prefix + ".proj.b", {spec.embed_channels}, -1);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    if (static_cast<Head>(h) == Head::gc && !spec.with_gc) continue;
    const std::string prefix = std::string("head.") + to_string(static_cast<Head>(h));
    int in = spec.embedding_channels();
    for (std::size_t i = 0; i < spec.head_convs.size(); ++i) {
      const auto& c = spec.head_convs[i];
      add(prefix + ".conv" + std::to_string(i) + ".w", {c.channels, in, c.kernel}, h);
      add(prefix + ".conv" + std::to_string(i) + ".b", {c.channels}, h);
      in = c.channels;
    }
    add(prefix + ".fc.w", {spec.head_outputs(static_cast<Head>(h)), in}, h);
    add(prefix + ".fc.b", {spec.head_outputs(static_cast<Head>(h))}, h);
  }
  return groups;
}

template <class T>
const ParamGroup* ModelParamsT<T>::find(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

template <class T>
ModelParamsT<T> init_params(const ModelSpec& spec, std::uint64_t seed, bool zero_final_layers) {
  ModelParamsT<T> params{spec, parameter_layout(spec), {}};
  params.values.assign(params.groups.empty() ? 0 : params.groups.back().offset + params.groups.back().size,
                       T(0));
  auto rng = make_rng(seed, {0x1417ULL});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& g : params.groups) {
    if (g.shape.size() < 2) continue;  // biases stay zero
    const bool final_layer = g.name.find(".fc.") != std::string::npos;
    if (final_layer && zero_final_layers) continue;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < g.shape.size(); ++d) fan_in *= static_cast<std::size_t>(g.shape[d]);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < g.size; ++i) {
      params.values[g.offset + i] = static_cast<T>(stddev * gauss(rng));
    }
  }
  return params;
}

template <class T>
ViewTensors<T> ViewTensors<T>::allocate(const ModelSpec& spec) {
  ViewTensors<T> v;
  for (int i = 0; i < kNumViews; ++i) {
    const auto view = static_cast<View>(i);
    v.view(view).assign(static_cast<std::size_t>(spec.view_rows(view)) * spec.view_cols(view), T(0));
  }
  return v;
}

template <class T>
ViewTensors<T> ViewTensors<T>::from(const ViewSet& views) {
  ViewTensors<T> v;
  v.jcd.assign(views.jcd.data.begin(), views.jcd.data.end());
  v.slow.assign(views.m_slow.data.begin(), views.m_slow.data.end());
  v.fast.assign(views.m_fast.data.begin(), views.m_fast.data.end());
  return v;
}

namespace {

// Frame-major patches: col[t * cin * kernel + ci * kernel + k] = in[ci][t + k - pad].
template <class T>
void im2col(const T* in, int cin, int steps, int kernel, std::vector<T>& col) {
  const int pad = kernel / 2;
  const std::size_t width = static_cast<std::size_t>(cin) * kernel;
  col.assign(width * steps, T(0));
  for (int t = 0; t < steps; ++t) {
    T* row = col.data() + width * t;
    for (int ci = 0; ci < cin; ++ci) {
      const T* x = in + static_cast<std::size_t>(ci) * steps;
      for (int k = 0; k < kernel; ++k) {
        const int src = t + k - pad;
        if (src >= 0 && src < steps) row[static_cast<std::size_t>(ci) * kernel + k] = x[src];
      }
    }
  }
}

// Eight independent partial sums so the loop vectorizes without fast-math.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void conv_forward(const T* in, int cin, int steps, const T* w, const T* b, int cout, int kernel, T* out) {
  thread_local std::vector<T> col;
  im2col(in, cin, steps, kernel, col);
  const std::size_t width = static_cast<std::size_t>(cin) * kernel;
  for (int co = 0; co < cout; ++co) {
    const T* wr = w + width * co;
    T* o = out + static_cast<std::size_t>(co) * steps;
    for (int t = 0; t < steps; ++t) o[t] = b[co] + dot(wr, col.data() + width * t, width);
  }
}

template <class T>
void conv_backward(const T* in, int cin, int steps, const T* w, int cout, int kernel, const T* dout,
                   T* dw, T* db, T* din) {
  thread_local std::vector<T> col;
  thread_local std::vector<T> dcol;
  im2col(in, cin, steps, kernel, col);
  const std::size_t width = static_cast<std::size_t>(cin) * kernel;
  for (int co = 0; co < cout; ++co) {
    const T* d = dout + static_cast<std::size_t>(co) * steps;
    T* dwr = dw + width * co;
    T acc = 0;
    for (int t = 0; t < steps; ++t) {
      acc += d[t];
      const T dv = d[t];
      const T* c = col.data() + width * t;
      for (std::size_t i = 0; i < width; ++i) dwr[i] += dv * c[i];
    }
    db[co] += acc;
  }
  if (!din) return;
  dcol.assign(width * steps, T(0));
  for (int t = 0; t < steps; ++t) {
    T* dc = dcol.data() + width * t;
    for (int co = 0; co < cout; ++co) {
      const T dv = dout[static_cast<std::size_t>(co) * steps + t];
      const T* wr = w + width * co;
      for (std::size_t i = 0; i < width; ++i) dc[i] += dv * wr[i];
    }
  }
  const int pad = kernel / 2;
  for (int t = 0; t < steps; ++t) {
    const T* dc = dcol.data() + width * t;
    for (int ci = 0; ci < cin; ++ci) {
      T* dx = din + static_cast<std::size_t>(ci) * steps;
      for (int k = 0; k < kernel; ++k) {
        const int src = t + k - pad;
        if (src >= 0 && src < steps) dx[src] += dc[static_cast<std::size_t>(ci) * kernel + k];
      }
    }
  }
}

template <class T>
void elu_inplace(const std::vector<T>& pre, std::vector<T>& post) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    post[i] = pre[i] > T(0) ? pre[i] : std::expm1(pre[i]);
  }
}

// dpost -> dpre, in place.
template <class T>
void elu_backward(const std::vector<T>& pre, const std::vector<T>& post, std::vector<T>& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(pre[i] > T(0))) d[i] *= post[i] + T(1);
  }
}

std::vector<std::pair<int, int>> adaptive_bins(int n, int m) {
  std::vector<std::pair<int, int>> bins(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const int s = (i * n) / m;
    const int e = ((i + 1) * n + m - 1) / m;
    bins[static_cast<std::size_t>(i)] = {s, std::max(e, s + 1)};
  }
  return bins;
}

}  // namespace

template <class T>
Network<T>::Network(const ModelSpec& spec) : spec_(spec) {
  const auto groups = parameter_layout(spec_);
  auto group_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i].name == name) return i;
    }
    fail(ErrorKind::Internal, "missing parameter group " + name);
  };
  const int half = spec_.embed_steps();
  for (int v = 0; v < kNumViews; ++v) {
    auto& e = enc_[static_cast<std::size_t>(v)];
    const auto view = static_cast<View>(v);
    const std::string prefix = std::string("enc.") + to_string(view);
    e.in_rows = spec_.view_rows(view);
    e.in_steps = spec_.view_cols(view);
    int in = e.in_rows;
    for (std::size_t i = 0; i < spec_.encoder_convs.size(); ++i) {
      const auto& c = spec_.encoder_convs[i];
      const std::string p = prefix + ".conv" + std::to_string(i);
      e.convs.push_back({in, c.channels, c.kernel, e.in_steps, group_index(p + ".w"), group_index(p + ".b")});
      const auto n = static_cast<std::size_t>(c.channels) * e.in_steps;
      e.pre.emplace_back(n);
      e.post.emplace_back(n);
      e.dpost.emplace_back(n);
      in = c.channels;
    }
    e.bins = adaptive_bins(e.in_steps, half);
    e.pooled.resize(static_cast<std::size_t>(in) * half);
    e.dpooled.resize(e.pooled.size());
    e.proj_w = group_index(prefix + ".proj.w");
    e.proj_b = group_index(prefix + ".proj.b");
    e.out.resize(static_cast<std::size_t>(spec_.embed_channels) * half);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    auto& hs = heads_[static_cast<std::size_t>(h)];
    const auto head = static_cast<Head>(h);
    if (head == Head::gc && !spec_.with_gc) continue;
    hs.present = true;
    const std::string prefix = std::string("head.") + to_string(head);
    int in = spec_.embedding_channels();
    for (std::size_t i = 0; i < spec_.head_convs.size(); ++i) {
      const auto& c = spec_.head_convs[i];
      const std::string p = prefix + ".conv" + std::to_string(i);
      hs.convs.push_back({in, c.channels, c.kernel, half, group_index(p + ".w"), group_index(p + ".b")});
      const auto n = static_cast<std::size_t>(c.channels) * half;
      hs.pre.emplace_back(n);
      hs.post.emplace_back(n);
      hs.dpost.emplace_back(n);
      in = c.channels;
    }
    hs.mean.resize(static_cast<std::size_t>(in));
    hs.dmean.resize(hs.mean.size());
    hs.fc_w = group_index(prefix + ".fc.w");
    hs.fc_b = group_index(prefix + ".fc.b");
    hs.outputs = spec_.head_outputs(head);
    hs.logits.resize(static_cast<std::size_t>(hs.outputs));
  }
  out_.steps = half;
  out_.channels = spec_.embedding_channels();
  out_.g.resize(static_cast<std::size_t>(out_.channels) * half);
  out_.fine_logits.resize(static_cast<std::size_t>(spec_.num_classes));
  dg_.resize(out_.g.size());
}

template <class T>
const ForwardOutput<T>& Network<T>::forward(const ModelParamsT<T>& params, const ViewTensors<T>& views,
                                            HeadFlags heads) {
  if (!(params.spec == spec_)) fail(ErrorKind::Shape, "parameters were built for a different spec");
  const int half = spec_.embed_steps();
  for (int v = 0; v < kNumViews; ++v) {
    auto& e = enc_[static_cast<std::size_t>(v)];
    const auto& x = views.view(static_cast<View>(v));
    if (x.size() != static_cast<std::size_t>(e.in_rows) * e.in_steps) {
      fail(ErrorKind::Shape, std::string("view ") + to_string(static_cast<View>(v)) + " has " +
                                 std::to_string(x.size()) + " values, expected " +
                                 std::to_string(e.in_rows) + "x" + std::to_string(e.in_steps));
    }
    const T* in = x.data();
    int rows = e.in_rows;
    for (std::size_t l = 0; l < e.convs.size(); ++l) {
      const auto& c = e.convs[l];
      conv_forward(in, c.in_ch, c.steps, params.group(c.w_group).data(), params.group(c.b_group).data(),
                   c.out_ch, c.kernel, e.pre[l].data());
      elu_inplace(e.pre[l], e.post[l]);
      in = e.post[l].data();
      rows = c.out_ch;
    }
    for (int r = 0; r < rows; ++r) {
      const T* src = in + static_cast<std::size_t>(r) * e.in_steps;
      for (int i = 0; i < half; ++i) {
        const auto [s, t] = e.bins[static_cast<std::size_t>(i)];
        T acc = 0;
        for (int j = s; j < t; ++j) acc += src[j];
        e.pooled[static_cast<std::size_t>(r) * half + i] = acc / static_cast<T>(t - s);
      }
    }
    conv_forward(e.pooled.data(), rows, half, params.group(e.proj_w).data(), params.group(e.proj_b).data(),
                 spec_.embed_channels, 1, e.out.data());
    std::copy(e.out.begin(), e.out.end(),
              out_.g.begin() + static_cast<std::ptrdiff_t>(v) * spec_.embed_channels * half);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    auto& hs = heads_[static_cast<std::size_t>(h)];
    if (!hs.present || !heads[static_cast<std::size_t>(h)]) continue;
    const T* in = out_.g.data();
    int rows = out_.channels;
    for (std::size_t l = 0; l < hs.convs.size(); ++l) {
      const auto& c = hs.convs[l];
      conv_forward(in, c.in_ch, half, params.group(c.w_group).data(), params.group(c.b_group).data(),
                   c.out_ch, c.kernel, hs.pre[l].data());
      elu_inplace(hs.pre[l], hs.post[l]);
      in = hs.post[l].data();
      rows = c.out_ch;
    }
    for (int r = 0; r < rows; ++r) {
      T acc = 0;
      for (int t = 0; t < half; ++t) acc += in[static_cast<std::size_t>(r) * half + t];
      hs.mean[static_cast<std::size_t>(r)] = acc / static_cast<T>(half);
    }
    const T* w = params.group(hs.fc_w).data();
    const T* b = params.group(hs.fc_b).data();
    for (int o = 0; o < hs.outputs; ++o) {
      T acc = b[o];
      for (int r = 0; r < rows; ++r) acc += w[static_cast<std::size_t>(o) * rows + r] * hs.mean[static_cast<std::size_t>(r)];
      hs.logits[static_cast<std::size_t>(o)] = acc;
    }
    switch (static_cast<Head>(h)) {
      case Head::sdn: std::copy_n(hs.logits.begin(), 3, out_.sdn_logits.begin()); break;
      case Head::fine: out_.fine_logits = hs.logits; break;
      case Head::start: out_.start_pred = hs.logits[0]; break;
      case Head::end: out_.end_pred = hs.logits[0]; break;
      case Head::gc: out_.gc_logit = hs.logits[0]; break;
    }
  }
  last_views_ = &views;
  return out_;
}

template <class T>
void Network<T>::backward(const ModelParamsT<T>& params, const OutputGrads<T>& d, std::span<T> grad) {
  if (last_views_ == nullptr) fail(ErrorKind::Internal, "backward() without forward()");
  if (grad.size() != params.values.size()) fail(ErrorKind::Shape, "gradient buffer size mismatch");
  const int half = spec_.embed_steps();
  auto gptr = [&](std::size_t group) { return grad.data() + params.groups[group].offset; };

  bool any = false;
  std::fill(dg_.begin(), dg_.end(), T(0));
  for (int h = 0; h < kNumHeads; ++h) {
    auto& hs = heads_[static_cast<std::size_t>(h)];
    if (!hs.present || !d.active[static_cast<std::size_t>(h)]) continue;
    any = true;
    const T* dlogits = nullptr;
    switch (static_cast<Head>(h)) {
      case Head::sdn: dlogits = d.sdn.data(); break;
      case Head::fine: dlogits = d.fine.data(); break;
      case Head::start: dlogits = &d.start; break;
      case Head::end: dlogits = &d.end; break;
      case Head::gc: dlogits = &d.gc; break;
    }
    const int rows = static_cast<int>(hs.mean.size());
    const T* w = params.group(hs.fc_w).data();
    T* dw = gptr(hs.fc_w);
    T* db = gptr(hs.fc_b);
    std::fill(hs.dmean.begin(), hs.dmean.end(), T(0));
    for (int o = 0; o < hs.outputs; ++o) {
      const T go = dlogits[o];
      db[o] += go;
      for (int r = 0; r < rows; ++r) {
        dw[static_cast<std::size_t>(o) * rows + r] += go * hs.mean[static_cast<std::size_t>(r)];
        hs.dmean[static_cast<std::size_t>(r)] += go * w[static_cast<std::size_t>(o) * rows + r];
      }
    }
    // The temporal mean spreads its gradient evenly over the trunk output.
    T* dlast = hs.convs.empty() ? nullptr : hs.dpost.back().data();
    for (int r = 0; r < rows; ++r) {
      const T v = hs.dmean[static_cast<std::size_t>(r)] / static_cast<T>(half);
      for (int t = 0; t < half; ++t) {
        if (dlast) dlast[static_cast<std::size_t>(r) * half + t] = v;
        else dg_[static_cast<std::size_t>(r) * half + t] += v;
      }
    }
    for (std::size_t l = hs.convs.size(); l-- > 0;) {
      const auto& c = hs.convs[l];
      elu_backward(hs.pre[l], hs.post[l], hs.dpost[l]);
      const T* in = l == 0 ? out_.g.data() : hs.post[l - 1].data();
      T* din = nullptr;
      if (l == 0) {
        din = dg_.data();
      } else {
        std::fill(hs.dpost[l - 1].begin(), hs.dpost[l - 1].end(), T(0));
        din = hs.dpost[l - 1].data();
      }
      conv_backward(in, c.in_ch, half, params.group(c.w_group).data(), c.out_ch, c.kernel,
                    hs.dpost[l].data(), gptr(c.w_group), gptr(c.b_group), din);
    }
  }
  if (!any) return;

  for (int v = 0; v < kNumViews; ++v) {
    auto& e = enc_[static_cast<std::size_t>(v)];
    const T* dout = dg_.data() + static_cast<std::size_t>(v) * spec_.embed_channels * half;
    const int rows = static_cast<int>(e.pooled.size()) / half;
    std::fill(e.dpooled.begin(), e.dpooled.end(), T(0));
    conv_backward(e.pooled.data(), rows, half, params.group(e.proj_w).data(), spec_.embed_channels, 1,
                  dout, gptr(e.proj_w), gptr(e.proj_b), e.dpooled.data());
    if (e.convs.empty()) continue;  // the pooled input is the raw view
    auto& dlast = e.dpost.back();
    std::fill(dlast.begin(), dlast.end(), T(0));
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < half; ++i) {
        const auto [s, t] = e.bins[static_cast<std::size_t>(i)];
        const T share = e.dpooled[static_cast<std::size_t>(r) * half + i] / static_cast<T>(t - s);
        for (int j = s; j < t; ++j) dlast[static_cast<std::size_t>(r) * e.in_steps + j] += share;
      }
    }
    const auto& x = last_views_->view(static_cast<View>(v));
    for (std::size_t l = e.convs.size(); l-- > 0;) {
      const auto& c = e.convs[l];
      elu_backward(e.pre[l], e.post[l], e.dpost[l]);
      const T* in = l == 0 ? x.data() : e.post[l - 1].data();
      T* din = nullptr;
      if (l > 0) {
        std::fill(e.dpost[l - 1].begin(), e.dpost[l - 1].end(), T(0));
        din = e.dpost[l - 1].data();
      }
      conv_backward(in, c.in_ch, c.steps, params.group(c.w_group).data(), c.out_ch, c.kernel,
                    e.dpost[l].data(), gptr(c.w_group), gptr(c.b_group), din);
    }
  }
}

template <class T>
std::span<const T> Network<T>::encoder_output(View v) const {
  return enc_[static_cast<std::size_t>(v)].out;
}

std::string describe(const ModelSpec& spec) {
  auto convs = [](const std::vector<ConvSpec>& list) {
    std::string s;
    for (const auto& c : list) s += (s.empty() ? "" : " ") + std::to_string(c.channels) + ":" + std::to_string(c.kernel);
    return s.empty() ? std::string("-") : s;
  };
  std::ostringstream out;
  out << "window " << spec.window << '\n'
      << "joints " << spec.joints << '\n'
      << "num_classes " << spec.num_classes << '\n'
      << "motion " << to_string(spec.motion) << '\n'
      << "feature_scale " << format_double(spec.feature_scale) << '\n'
      << "overlap_threshold " << format_double(spec.overlap_threshold) << '\n'
      << "encoder_convs " << convs(spec.encoder_convs) << '\n'
      << "embed_channels " << spec.embed_channels << '\n'
      << "head_convs " << convs(spec.head_convs) << '\n'
      << "with_gc " << (spec.with_gc ? 1 : 0) << '\n';
  return out.str();
}

namespace {

constexpr const char* kCheckpointTag = "handseg-checkpoint 1";

std::vector<ConvSpec> parse_convs(const std::vector<std::string>& toks) {
  std::vector<ConvSpec> out;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    if (toks[i] == "-") continue;
    auto colon = toks[i].find(':');
    if (colon == std::string::npos) fail(ErrorKind::Parse, "bad conv spec '" + toks[i] + "'");
    out.push_back({static_cast<int>(parse_int(toks[i].substr(0, colon), "conv channels")),
                   static_cast<int>(parse_int(toks[i].substr(colon + 1), "conv kernel"))});
  }
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kCheckpointTag << '\n' << describe(params.spec);
  out << "groups " << params.groups.size() << '\n';
  for (const auto& g : params.groups) {
    out << g.name << ' ' << g.owner << ' ' << g.shape.size();
    for (int d : g.shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  std::string blob = out.str();
  const std::size_t header = blob.size();
  blob.resize(header + params.values.size() * 4);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(params.values[i]);
    for (int b = 0; b < 4; ++b) blob[header + 4 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  write_file_atomically(path, blob);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::FileNotFound, "no such checkpoint: " + path.string());
  const std::string blob = read_file(path);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  auto next_line = [&]() -> std::string {
    auto nl = blob.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(lineno, path.string() + ": truncated header");
    std::string line = blob.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    return line;
  };
  if (next_line() != kCheckpointTag) throw ParseError(1, path.string() + ": not a handseg checkpoint");
  ModelSpec spec;
  std::size_t n_groups = 0;
  while (true) {
    const auto toks = split_ws(next_line());
    if (toks.empty()) continue;
    const auto& key = toks[0];
    auto value = [&]() -> const std::string& {
      if (toks.size() < 2) throw ParseError(lineno, "missing value for " + key);
      return toks[1];
    };
    if (key == "window") spec.window = static_cast<int>(parse_int(value(), key));
    else if (key == "joints") spec.joints = static_cast<int>(parse_int(value(), key));
    else if (key == "num_classes") spec.num_classes = static_cast<int>(parse_int(value(), key));
    else if (key == "motion") {
      auto m = parse_motion_variant(value());
      if (!m) throw ParseError(lineno, "unknown motion variant");
      spec.motion = *m;
    } else if (key == "feature_scale") spec.feature_scale = parse_double(value(), key);
    else if (key == "overlap_threshold") spec.overlap_threshold = parse_double(value(), key);
    else if (key == "encoder_convs") spec.encoder_convs = parse_convs(toks);
    else if (key == "embed_channels") spec.embed_channels = static_cast<int>(parse_int(value(), key));
    else if (key == "head_convs") spec.head_convs = parse_convs(toks);
    else if (key == "with_gc") spec.with_gc = parse_int(value(), key) != 0;
    else if (key == "groups") {
      n_groups = static_cast<std::size_t>(parse_int(value(), key));
      break;
    } else {
      throw ParseError(lineno, "unknown checkpoint key '" + key + "'");
    }
  }
  ModelParams params{spec, parameter_layout(spec), {}};
  if (n_groups != params.groups.size()) {
    throw ParseError(lineno, "group count does not match the architecture in the header");
  }
  for (const auto& g : params.groups) {
    const auto toks = split_ws(next_line());
    if (toks.size() < 3 || toks[0] != g.name ||
        parse_int(toks[2], "rank") != static_cast<long long>(g.shape.size()) ||
        toks.size() != 3 + g.shape.size()) {
      throw ParseError(lineno, "group table does not match the architecture (expected " + g.name + ")");
    }
    for (std::size_t d = 0; d < g.shape.size(); ++d) {
      if (parse_int(toks[3 + d], "dim") != g.shape[d]) throw ParseError(lineno, "shape mismatch for " + g.name);
    }
  }
  if (next_line() != "data") throw ParseError(lineno, "expected 'data'");
  const std::size_t count = params.groups.empty() ? 0 : params.groups.back().offset + params.groups.back().size;
  if (blob.size() - pos != count * 4) {
    fail(ErrorKind::Parse, path.string() + ": expected " + std::to_string(count * 4) + " data bytes, found " +
                               std::to_string(blob.size() - pos));
  }
  params.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[pos + 4 * i + static_cast<std::size_t>(b)])) << (8 * b);
    }
    params.values[i] = std::bit_cast<float>(bits);
    if (!std::isfinite(params.values[i])) fail(ErrorKind::InvariantViolation, "checkpoint holds a non-finite parameter");
  }
  return params;
}

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;
template ModelParamsT<float> init_params<float>(const ModelSpec&, std::uint64_t, bool);
template ModelParamsT<double> init_params<double>(const ModelSpec&, std::uint64_t, bool);
template struct ViewTensors<float>;
template struct ViewTensors<double>;
template class Network<float>;
template class Network<double>;

}  // namespace handseg
