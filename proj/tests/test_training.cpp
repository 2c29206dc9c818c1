#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "ergl/synth.hpp"
#include "ergl/train.hpp"

using namespace ergl;
using DT = ad::Tensor<double>;
using FT = ad::Tensor<float>;

namespace {

// In-memory dataset: 3 scenes, trivially separable mel patterns, 4 events.
LoadedDataset toy_dataset(int per_scene = 8, int64_t frames = 32) {
  LoadedDataset data;
  data.scene_labels = {"alpha", "beta", "gamma"};
  std::vector<double> scores(kPseudoLabelDim, 0.0);
  scores[0] = 4;
  scores[1] = 3;
  scores[2] = 2;
  scores[3] = 1;
  data.vocab = select_top_n(scores, 4);
  data.frames = frames;

  Rng rng(1234);
  int id = 0;
  for (int scene = 0; scene < 3; ++scene) {
    for (int k = 0; k < per_scene; ++k) {
      LoadedClip clip;
      clip.clip_id = "toy" + std::to_string(id);
      clip.scene_index = scene;
      clip.feature.frames = frames;
      clip.feature.mel_bins = 64;
      clip.feature.values.assign(static_cast<size_t>(frames * 64), 0.0f);
      for (int64_t t = 0; t < frames; ++t)
        for (int64_t m = 0; m < 64; ++m) {
          double base = (m >= scene * 20 && m < scene * 20 + 12) ? 1.5 : -1.0;
          clip.feature.values[static_cast<size_t>(t * 64 + m)] =
              static_cast<float>(base + rng.normal() * 0.1);
        }
      clip.event_target = {0.1f, 0.1f, 0.1f, 0.1f};
      clip.event_target[static_cast<size_t>(scene)] = 0.9f;
      clip.split = k < per_scene - 2 ? "train" : (k == per_scene - 2 ? "val" : "test");
      int idx = id;
      if (clip.split == "train")
        data.train_idx.push_back(idx);
      else if (clip.split == "val")
        data.val_idx.push_back(idx);
      else
        data.test_idx.push_back(idx);
      data.clips.push_back(std::move(clip));
      ++id;
    }
  }
  return data;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.model.n_events = 4;
  cfg.model.gcn_layers = 1;
  cfg.model.scene_classes = 3;
  cfg.model.conv_channels = {4, 8};
  cfg.batch_size = 6;
  cfg.epochs = 12;
  cfg.lr = 2e-3;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("event_loss examples") {
  DT p({1, 2}, {0.3, 0.7});
  CHECK(event_loss(p, p).item() == 0.0);

  DT a({1, 2}, {1.0, 0.0});
  DT b({1, 2}, {0.0, 1.0});
  CHECK(event_loss(a, b).item() == doctest::Approx(1.0));

  DT c({1, 3});
  CHECK_THROWS_AS(event_loss(a, c), ContractError);
}

TEST_CASE("scene_loss closed forms") {
  DT uniform({1, 10}, 0.0);
  CHECK(scene_loss(uniform, {4}).item() == doctest::Approx(std::log(10.0)));

  DT confident({1, 10}, 0.0);
  confident.data()[7] = 60.0;
  CHECK(scene_loss(confident, {7}).item() == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(scene_loss(uniform, {10}), ContractError);
  CHECK_THROWS_AS(scene_loss(uniform, {-1}), ContractError);
}

TEST_CASE("combined_loss weighting and linearity") {
  auto le = DT::scalar(0.5);
  auto ls = DT::scalar(2.0);
  CHECK(combined_loss(le, ls, 1.0, 1.0).item() == doctest::Approx(2.5));

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    double l1 = rng.uniform(), l2 = rng.uniform();
    CHECK(combined_loss(le, ls, l1, l2).item() ==
          doctest::Approx(l1 * 0.5 + l2 * 2.0).epsilon(1e-12));
  }
}

TEST_CASE("lambda1=0 stops gradients into the event classifiers") {
  ModelConfig mc;
  mc.n_events = 3;
  mc.gcn_layers = 1;
  mc.scene_classes = 3;
  mc.conv_channels = {4};
  Rng rng(11);
  ErglModel<double> model(mc, rng);
  Rng drng(12);
  DT feat = DT::randn({2, 8, 64}, drng);
  DT targets = DT::uniform({2, 3}, drng, 0.0, 1.0);

  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    auto fwd = model.forward(feat, true);
    auto loss = combined_loss(event_loss(fwd.event_probs, targets),
                              scene_loss(fwd.scene.logits, {0, 2}), 0.0, 1.0);
    tape.backward(loss);
  }
  for (const auto& cls : model.backbone.event_cls) {
    if (cls.b.has_grad())
      for (double g : cls.b.grad()) CHECK(g == 0.0);
  }
  CHECK(model.gcn.scene_cls.w.has_grad());
}

TEST_CASE("adamw update rules") {
  SUBCASE("no gradient, no change") {
    FT p({3}, {1.0f, -2.0f, 3.0f});
    p.set_requires_grad(true);
    AdamW<float> opt({{"p", p}}, 0.1, 0.9, 0.999, 1e-8, 0.5);
    opt.step();  // p never accumulated a gradient
    CHECK(p.values() == std::vector<float>{1.0f, -2.0f, 3.0f});
  }

  SUBCASE("first step matches the closed form") {
    DT p({3}, {1.0, -2.0, 3.0});
    p.set_requires_grad(true);
    std::vector<double> g = {0.5, -1.25, 2.0};
    p.grad_buffer() = g;
    double lr = 0.01, eps = 1e-8;
    AdamW<double> opt({{"p", p}}, lr, 0.9, 0.999, eps, 0.0);
    opt.step();
    // bias-corrected first step: p -= lr * g / (|g| + eps)
    std::vector<double> expect = {1.0 - lr * 0.5 / (0.5 + eps), -2.0 - lr * (-1.25) / (1.25 + eps),
                                  3.0 - lr * 2.0 / (2.0 + eps)};
    for (int i = 0; i < 3; ++i) CHECK(p.values()[i] == doctest::Approx(expect[i]).epsilon(1e-9));
  }

  SUBCASE("decay-only scaling") {
    DT p({2}, {4.0, -8.0});
    p.set_requires_grad(true);
    p.grad_buffer();  // zero gradient present
    double lr = 0.1, wd = 0.5;
    AdamW<double> opt({{"p", p}}, lr, 0.9, 0.999, 1e-8, wd);
    opt.step();
    CHECK(p.values()[0] == doctest::Approx(4.0 * (1 - lr * wd)));
    CHECK(p.values()[1] == doctest::Approx(-8.0 * (1 - lr * wd)));
  }

  SUBCASE("freeze masks parameters by prefix") {
    DT a({1}, {1.0});
    DT b({1}, {1.0});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    a.grad_buffer()[0] = 1.0;
    b.grad_buffer()[0] = 1.0;
    AdamW<double> opt({{"mel.wq", a}, {"backbone.w", b}}, 0.1, 0.9, 0.999, 1e-8, 0.0);
    opt.set_freeze({"mel"});
    opt.step();
    CHECK(a.values()[0] == 1.0);
    CHECK(b.values()[0] != 1.0);
  }
}

TEST_CASE("tally_predictions oracle identities") {
  auto perfect = tally_predictions({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(perfect.accuracy == 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(perfect.confusion[static_cast<size_t>(i)][static_cast<size_t>(j)] == 0);

  // constant predictor scores the modal class frequency
  auto constant = tally_predictions({1, 1, 1, 1, 1}, {0, 1, 1, 2, 1}, 3);
  CHECK(constant.accuracy == doctest::Approx(3.0 / 5.0));

  // accuracy equals trace / total on random predictions
  Rng rng(17);
  std::vector<int64_t> pred, truth;
  for (int i = 0; i < 200; ++i) {
    pred.push_back(rng.randint(0, 9));
    truth.push_back(rng.randint(0, 9));
  }
  auto r = tally_predictions(pred, truth, 10);
  int64_t trace = 0, total = 0;
  for (int i = 0; i < 10; ++i) {
    trace += r.confusion[static_cast<size_t>(i)][static_cast<size_t>(i)];
    for (int j = 0; j < 10; ++j) total += r.confusion[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  CHECK(total == 200);
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(trace) / 200.0));
}

TEST_CASE("fresh model's first-batch scene loss is exactly ln(num scenes)") {
  auto data = toy_dataset();
  auto cfg = toy_config();
  Rng rng(cfg.seed);
  ErglModel<float> model(cfg.model, rng);
  auto features = feature_batch<float>(data, {0, 1, 8});
  ad::Tape<float> tape;
  ad::TapeScope<float> scope(tape);
  auto fwd = model.forward(features, true);
  auto ls = scene_loss(fwd.scene.logits, {0, 0, 1});
  CHECK(static_cast<double>(ls.item()) == doctest::Approx(std::log(3.0)).epsilon(1e-6));
}

TEST_CASE("training overfits the toy dataset and is deterministic") {
  auto data = toy_dataset();
  auto cfg = toy_config();

  std::ostringstream log1, log2;
  auto run1 = train(cfg, data, &log1);
  auto run2 = train(cfg, data, &log2);

  REQUIRE(run1.reports.size() == static_cast<size_t>(cfg.epochs));

  // determinism: identical report streams, modulo wall-clock time
  for (size_t i = 0; i < run1.reports.size(); ++i) {
    CHECK(run1.reports[i].l_event == run2.reports[i].l_event);
    CHECK(run1.reports[i].l_scene == run2.reports[i].l_scene);
    CHECK(run1.reports[i].scene_accuracy == run2.reports[i].scene_accuracy);
  }
  // identical persisted parameters, bitwise
  REQUIRE(run1.checkpoint.tensors.size() == run2.checkpoint.tensors.size());
  for (size_t i = 0; i < run1.checkpoint.tensors.size(); ++i)
    CHECK(run1.checkpoint.tensors[i].data == run2.checkpoint.tensors[i].data);

  // total loss decomposition holds per epoch
  for (const auto& rep : run1.reports)
    CHECK(rep.l_total ==
          doctest::Approx(cfg.lambda1 * rep.l_event + cfg.lambda2 * rep.l_scene).epsilon(1e-6));

  // capacity vastly exceeds this task: training accuracy should be high
  auto model = run1.checkpoint.instantiate<float>();
  auto train_eval = evaluate_model(model, data, data.train_idx);
  CHECK(train_eval.accuracy >= 0.9);

  // best-validation bookkeeping
  double best = -1;
  int best_epoch = -1;
  for (const auto& rep : run1.reports)
    if (rep.scene_accuracy > best) {
      best = rep.scene_accuracy;
      best_epoch = rep.epoch;
    }
  CHECK(run1.best_val_accuracy == best);
  CHECK(run1.best_epoch == best_epoch);

  // jsonl log: one valid JSON object per epoch
  std::istringstream lines(log1.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.front() == '{');
    CHECK(line.find("\"l_total\"") != std::string::npos);
    ++count;
  }
  CHECK(count == cfg.epochs);
}

TEST_CASE("lambda2=0 keeps the scene head untrained while the event loss falls") {
  auto data = toy_dataset();
  auto cfg = toy_config();
  cfg.lambda2 = 0.0;
  cfg.epochs = 8;
  auto run = train(cfg, data, nullptr);

  CHECK(run.reports.back().l_event < run.reports.front().l_event);
  // zero-initialized classifier never receives gradient: argmax is constant,
  // so accuracy sits at the balanced-split chance level
  for (const auto& rep : run.reports)
    CHECK(rep.scene_accuracy == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("freeze isolates module parameters") {
  auto data = toy_dataset();
  auto cfg = toy_config();
  cfg.epochs = 2;
  cfg.freeze = {"mel", "gcn"};
  auto run = train(cfg, data, nullptr);

  // compare against a fresh init with the same seed
  Rng rng(cfg.seed);
  ErglModel<float> fresh(cfg.model, rng);
  auto fresh_reg = fresh.registry();
  auto trained = run.checkpoint;
  for (const auto& p : fresh_reg.params) {
    const NamedBlob* blob = nullptr;
    for (const auto& t : trained.tensors)
      if (t.name == p.name) blob = &t;
    REQUIRE(blob != nullptr);
    bool frozen = p.name.rfind("mel", 0) == 0 || p.name.rfind("gcn.layer", 0) == 0;
    bool identical = true;
    for (size_t k = 0; k < blob->data.size(); ++k)
      if (blob->data[k] != p.tensor.values()[k]) identical = false;
    if (frozen) {
      CHECK(identical);
    } else if (p.name.rfind("backbone.joint", 0) == 0) {
      CHECK_FALSE(identical);
    }
  }
}

TEST_CASE("non-finite input aborts with a numeric error") {
  auto data = toy_dataset();
  data.clips[0].feature.values[10] = std::numeric_limits<float>::quiet_NaN();
  auto cfg = toy_config();
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(cfg, data, nullptr), NumericError);
}

TEST_CASE("checkpoint round trip preserves the forward pass exactly") {
  auto data = toy_dataset();
  auto cfg = toy_config();
  cfg.epochs = 2;
  auto run = train(cfg, data, nullptr);

  auto path = (std::filesystem::temp_directory_path() / "ergl_train_ck.erglckpt").string();
  run.checkpoint.save(path);
  auto loaded = Checkpoint::load(path);

  auto m1 = run.checkpoint.instantiate<float>();
  auto m2 = loaded.instantiate<float>();
  auto features = feature_batch<float>(data, {0, 5, 9});
  auto f1 = m1.forward(features, false);
  auto f2 = m2.forward(features, false);
  CHECK(f1.scene.logits.values() == f2.scene.logits.values());
  CHECK(f1.event_probs.values() == f2.event_probs.values());

  auto ev1 = evaluate_checkpoint(loaded, data, "test");
  auto ev2 = evaluate_model(m1, data, data.test_idx);
  CHECK(ev1.accuracy == ev2.accuracy);
  std::filesystem::remove(path);
}

TEST_CASE("synthetic dataset generation and ingestion") {
  auto dir = (std::filesystem::temp_directory_path() / "ergl_synth_unit").string();
  std::filesystem::remove_all(dir);

  SynthOptions opts;
  opts.seed = 5;
  opts.clips_per_scene = 4;
  opts.clip_seconds = 0.5;
  auto summary = gen_synth_dataset(dir, opts);
  CHECK(summary.clips == 40);

  auto manifest = DatasetManifest::load(summary.manifest_path);
  CHECK(manifest.rows.size() == 40);
  CHECK(manifest.split("train").size() == 20);
  CHECK(manifest.split("test").size() == 20);

  auto names = load_event_names(summary.event_names_path);
  auto data = load_dataset(manifest, dir, 10, &names);
  CHECK(data.scene_labels.size() == 10);

  // the top-10 vocabulary recovers exactly the planted event indices
  auto vocab_indices = data.vocab.indices();
  std::set<int> got(vocab_indices.begin(), vocab_indices.end());
  std::set<int> want(kSynthEventIndices, kSynthEventIndices + kSynthEventCount);
  CHECK(got == want);

  // determinism: same seed, same manifest and labels, byte for byte
  auto dir2 = (std::filesystem::temp_directory_path() / "ergl_synth_unit2").string();
  std::filesystem::remove_all(dir2);
  auto summary2 = gen_synth_dataset(dir2, opts);
  auto read_file = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(read_file(summary.manifest_path) == read_file(summary2.manifest_path));
  CHECK(read_file(summary.labels_path) == read_file(summary2.labels_path));
  CHECK(read_file((std::filesystem::path(dir) / "wav" / "scene3_clip01.wav").string()) ==
        read_file((std::filesystem::path(dir2) / "wav" / "scene3_clip01.wav").string()));

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
