#include <fstream>

#include "doctest.h"
#include "handseg/synth.hpp"
#include "handseg/train.hpp"
#include "support.hpp"

using namespace handseg;
using handseg::test::error_kind_of;

namespace {

std::vector<PoseSequence> separable_corpus(int n) {
  SynthConfig cfg;
  GestureTemplate fist;
  fist.name = "fist";
  fist.pose = hand_pose_preset("fist");
  fist.min_duration = 30;
  fist.max_duration = 50;
  cfg.templates = {fist};
  cfg.min_length = cfg.max_length = 200;
  cfg.min_gestures = cfg.max_gestures = 2;
  cfg.seed = 5;
  return generate_corpus(cfg, n);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.window = 16;
  cfg.stride = 2;
  cfg.epochs = 10;
  cfg.seed = 3;
  cfg.encoder_convs = {{8, 3}};
  cfg.head_convs = {{8, 3}};
  return cfg;
}

std::vector<float> group_values(const ModelParams& p, int owner) {
  std::vector<float> out;
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    if (p.groups[g].owner != owner) continue;
    auto v = p.group(g);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

PoseSequence plain_sequence(int frames) {
  std::mt19937_64 rng(1);
  return handseg::test::random_sequence(rng, frames, 3, 3, 0);
}

WindowSample sample_with(std::optional<int> start, std::optional<int> end) {
  WindowSample s;
  s.labels.fine = 1;
  s.labels.sdn = Sdn::S;
  s.labels.start_index = start;
  s.labels.end_index = end;
  s.mask = mask_for(s.labels);
  return s;
}

}  // namespace

TEST_CASE("window counts") {
  std::vector<PoseSequence> corpus{plain_sequence(100)};
  TrainConfig cfg;
  cfg.window = 16;
  cfg.stride = 1;
  auto d = build_window_dataset(corpus, cfg);
  CHECK(d.size() == 85);
  CHECK(d.entry(0).end_frame == 15);
  CHECK(d.entry(84).end_frame == 99);
  cfg.stride = 4;
  d = build_window_dataset(corpus, cfg);
  CHECK(d.size() == 22);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.entry(i).labels.fine == 0);
    CHECK(d.entry(i).mask == TaskMask{true, true, false, false});
  }
  REQUIRE(d.class_counts().size() == 3);
  CHECK(d.class_counts()[0] == 22);
  corpus.push_back(plain_sequence(15));
  CHECK(error_kind_of([&] { build_window_dataset(corpus, cfg); }) == ErrorKind::SequenceTooShort);
}

TEST_CASE("dataset windows match direct sampling") {
  auto corpus = separable_corpus(2);
  TrainConfig cfg;
  cfg.stride = 7;
  auto d = build_window_dataset(corpus, cfg);
  for (std::size_t i = 0; i < d.size(); i += 5) {
    const auto& e = d.entry(i);
    auto direct = make_sample(corpus[static_cast<std::size_t>(e.sequence)], e.end_frame, 16);
    auto s = d.sample(i);
    CHECK(s.labels == direct.labels);
    CHECK(s.mask == direct.mask);
    for (std::size_t k = 0; k < direct.views.jcd.data.size(); ++k) {
      CHECK(s.views.jcd.data[k] == doctest::Approx(direct.views.jcd.data[k]).epsilon(1e-14));
    }
  }
}

TEST_CASE("gated loss components") {
  ForwardOutput<double> out;
  out.sdn_logits = {0.5, -1.0, 2.0};
  out.fine_logits = {0.1, 0.7, -0.3};
  out.start_pred = 0.2;
  out.end_pred = 0.9;
  TaskLabels labels;
  labels.sdn = Sdn::D;
  labels.fine = 2;
  auto ce = [](std::vector<double> z, int y) {
    double s = 0.0;
    for (double v : z) s += std::exp(v);
    return std::log(s) - z[static_cast<std::size_t>(y)];
  };
  auto terms = loss(out, labels, HeadFlags{true, true, false, false, false}, LossWeights{}, 16);
  CHECK(terms.total == doctest::Approx(ce({0.5, -1.0, 2.0}, 1) + ce({0.1, 0.7, -0.3}, 2)).epsilon(1e-14));
  CHECK(terms.per_head[2] == 0.0);

  labels.start_index = 3;
  out.start_pred = 3.0 / 15.0;
  terms = loss(out, labels, HeadFlags{false, false, true, false, false}, LossWeights{}, 16);
  CHECK(terms.per_head[2] == 0.0);
  CHECK(terms.total == 0.0);

  double last = 1e9;
  for (double margin : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    out.fine_logits = {0.0, 0.0, margin};
    const double l = loss(out, labels, HeadFlags{false, true, false, false, false}, LossWeights{}, 16).total;
    CHECK(l < last);
    last = l;
  }
  CHECK(last < 1e-13);
}

TEST_CASE("exact policy is the identity") {
  Rng rng(1);
  auto s = sample_with(5, std::nullopt);
  auto out = apply_on_off_policy(s, OnOffPolicy{}, rng);
  CHECK(out.labels == s.labels);
  CHECK(out.mask == s.mask);
}

TEST_CASE("window error switches heads at rate p") {
  OnOffPolicy p{OnOffPolicy::Kind::window_error, 0.5};
  Rng rng(2);
  int on = 0, consistent = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto s = apply_on_off_policy(sample_with(i % 2 ? std::optional<int>(4) : std::nullopt, std::nullopt), p, rng);
    on += s.mask[kTaskStart];
    consistent += s.mask[kTaskStart] == s.labels.start_index.has_value() &&
                  s.mask[kTaskEnd] == s.labels.end_index.has_value();
  }
  const double rate = static_cast<double>(on) / n;
  CHECK(rate >= 0.47);
  CHECK(rate <= 0.53);
  CHECK(consistent == n);
}

TEST_CASE("index error redraws indices uniformly") {
  OnOffPolicy p{OnOffPolicy::Kind::index_error, 0.5};
  Rng rng(3);
  std::array<int, 16> hist{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    TaskLabels labels = sample_with(5, std::nullopt).labels;
    TaskMask mask = mask_for(labels);
    apply_on_off_policy(labels, mask, p, 16, rng);
    REQUIRE(labels.start_index.has_value());
    CHECK_FALSE(labels.end_index.has_value());
    CHECK(mask == TaskMask{true, true, true, false});
    ++hist[static_cast<std::size_t>(*labels.start_index)];
  }
  double chi2 = 0.0;
  const double expected = n / 16.0;
  for (int c : hist) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 15 degrees of freedom.
  CHECK(chi2 < 30.578);
}

TEST_CASE("training separates a static gesture from non-gesture") {
  auto corpus = separable_corpus(20);
  auto cfg = small_config();
  auto r = train(corpus, cfg);
  REQUIRE(r.log.size() == 10);
  auto all = build_window_dataset(corpus, cfg);
  CHECK(window_accuracy(r.final_params, all) > 0.9);
  int rises = 0;
  for (std::size_t e = 1; e < r.log.size(); ++e) rises += r.log[e].total_loss > r.log[e - 1].total_loss;
  CHECK(rises <= 2);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_val_accuracy >= 0.0);
}

TEST_CASE("removed heads never change") {
  auto corpus = separable_corpus(6);
  auto cfg = small_config();
  cfg.head_set = HeadSet::fg;
  cfg.epochs = 1;
  auto one = train(corpus, cfg);
  cfg.epochs = 3;
  auto three = train(corpus, cfg);
  for (Head h : {Head::sdn, Head::start, Head::end}) {
    CHECK(group_values(one.final_params, static_cast<int>(h)) ==
          group_values(three.final_params, static_cast<int>(h)));
  }
  CHECK_FALSE(group_values(one.final_params, static_cast<int>(Head::fine)) ==
              group_values(three.final_params, static_cast<int>(Head::fine)));
  CHECK_FALSE(group_values(one.final_params, -1) == group_values(three.final_params, -1));
}

TEST_CASE("zero learning rate keeps the initialization") {
  auto corpus = separable_corpus(4);
  auto cfg = small_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  auto one = train(corpus, cfg);
  cfg.epochs = 3;
  auto three = train(corpus, cfg);
  CHECK(one.final_params.values == three.final_params.values);
  cfg.optimizer = OptimizerKind::adam;
  CHECK(train(corpus, cfg).final_params.values == one.final_params.values);
}

TEST_CASE("training is reproducible and thread-count independent") {
  auto corpus = separable_corpus(5);
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.policy = OnOffPolicy{OnOffPolicy::Kind::window_error, 0.5};
  auto a = train(corpus, cfg);
  auto b = train(corpus, cfg);
  CHECK(a.final_params.values == b.final_params.values);
  cfg.threads = 3;
  auto c = train(corpus, cfg);
  CHECK(c.final_params.values == a.final_params.values);
  for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(c.log[e].total_loss == a.log[e].total_loss);
  cfg.seed = 4;
  CHECK_FALSE(train(corpus, cfg).final_params.values == a.final_params.values);
}

TEST_CASE("head sets and policies parse") {
  CHECK(parse_head_set("FG") == HeadSet::fg);
  CHECK(parse_head_set("fg+gs/ge") == HeadSet::fg_gsge);
  CHECK(parse_head_set("FG+SDN") == HeadSet::fg_sdn);
  CHECK(parse_head_set("FG+SDN+GC") == HeadSet::fg_sdn_gc);
  CHECK(parse_head_set("full") == HeadSet::full);
  CHECK_FALSE(parse_head_set("FG+XX").has_value());
  CHECK(heads_in(HeadSet::fg_gsge) == HeadFlags{false, true, true, true, false});
  CHECK(heads_in(HeadSet::fg_sdn_gc) == HeadFlags{true, true, false, false, true});
  CHECK(heads_in(HeadSet::full) == HeadFlags{true, true, true, true, false});
  auto p = parse_on_off_policy("window_error:0.3");
  REQUIRE(p.has_value());
  CHECK(p->kind == OnOffPolicy::Kind::window_error);
  CHECK(p->probability == 0.3);
  CHECK(parse_on_off_policy("index_error")->kind == OnOffPolicy::Kind::index_error);
  CHECK_FALSE(parse_on_off_policy("window_error:1.5").has_value());
}

TEST_CASE("config text round trip") {
  auto cfg = train_config_from(KeyValueConfig::parse(
      "window = 20\nstride = 3\nepochs = 7\nlearning_rate = 0.01\noptimizer = adam\n"
      "weight.start = 0.5\nhead_set = FG+SDN+GC\non_off_policy = window_error:0.25\nseed = 9\n"
      "encoder_convs = 4:1 6:5\nhead_convs = -\nmotion_variant = magnitude\n"));
  CHECK(cfg.window == 20);
  CHECK(cfg.stride == 3);
  CHECK(cfg.optimizer == OptimizerKind::adam);
  CHECK(cfg.weights.weight[2] == 0.5);
  CHECK(cfg.head_set == HeadSet::fg_sdn_gc);
  CHECK(cfg.policy.probability == 0.25);
  CHECK(cfg.encoder_convs == std::vector<ConvSpec>{{4, 1}, {6, 5}});
  CHECK(cfg.head_convs.empty());
  CHECK(cfg.features.motion == MotionVariant::magnitude);
  auto back = train_config_from(to_key_values(cfg));
  CHECK(to_key_values(back).to_string() == to_key_values(cfg).to_string());
  CHECK(model_spec_for(cfg, 26, 7).with_gc);
  CHECK(error_kind_of([] { train_config_from(KeyValueConfig::parse("window = 15\n")); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { train_config_from(KeyValueConfig::parse("epochs = 0\n")); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { train_config_from(KeyValueConfig::parse("weight.fine = -1\n")); }) == ErrorKind::Config);
}

TEST_CASE("epoch log csv") {
  auto dir = handseg::test::scratch_dir("train_log");
  EpochLog e;
  e.epoch = 1;
  e.total_loss = 0.5;
  write_epoch_log_csv({e}, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,total_loss,sdn_loss,fine_loss,start_loss,end_loss,gc_loss,window_accuracy,val_accuracy,seconds");
  CHECK(row.rfind("1,0.5,", 0) == 0);
}
