#include "gcfsr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gcfsr/errors.hpp"
#include "gcfsr/log.hpp"
#include "gcfsr/metrics.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

namespace {

constexpr std::uint64_t kDiscSeedSalt = 0xD15C0000D15C0000ULL;
constexpr std::uint64_t kTrainSeedSalt = 0x7A1A7A1A7A1A7A1AULL;

AdamConfig adam_config(const ModelConfig& c, double lr) {
  AdamConfig a;
  a.lr = lr;
  a.beta1 = c.beta1;
  a.beta2 = c.beta2;
  return a;
}

std::vector<Tensor> grads_of(const GradTape& tape, const ParamSet& params) {
  std::vector<Tensor> out;
  for (const auto& t : params.tensors()) out.push_back(tape.grad(t));
  return out;
}

void add_params(Checkpoint& c, const std::string& prefix, const ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    c.tensors.emplace_back(prefix + params.names()[i], params.tensors()[i].detach());
}

void add_adam(Checkpoint& c, const std::string& prefix, const ParamSet& params, const AdamState& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors.emplace_back(prefix + "m/" + params.names()[i], s.first_moment[i].detach());
    c.tensors.emplace_back(prefix + "v/" + params.names()[i], s.second_moment[i].detach());
  }
  c.counters.emplace_back(prefix + "step", static_cast<std::uint64_t>(s.step));
}

void load_adam(const Checkpoint& c, const std::string& prefix, const ParamSet& params, AdamState& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    restore_tensor(s.first_moment[i], c.tensor(prefix + "m/" + params.names()[i]), prefix + "m/" + params.names()[i]);
    restore_tensor(s.second_moment[i], c.tensor(prefix + "v/" + params.names()[i]), prefix + "v/" + params.names()[i]);
  }
  s.step = static_cast<std::int64_t>(c.counter(prefix + "step"));
}

}  // namespace

Trainer::Trainer(const ModelConfig& config, const DataSource& data)
    : config_(config),
      data_(data),
      rng_(config.seed ^ kTrainSeedSalt),
      sampler_(config.factors.size()) {
  config_.validate();
  if (data.side() != config_.side())
    throw InvalidArgument("data side " + std::to_string(data.side()) + " does not match 2^u = " +
                          std::to_string(config_.side()));
  generator_ = std::make_unique<GcfsrModel>(config_, config_.seed);
  discriminator_ = std::make_unique<Discriminator>(config_, config_.seed ^ kDiscSeedSalt);
  adam_g_ = AdamState::zeros_like(generator_->params().tensors());
  adam_d_ = AdamState::zeros_like(discriminator_->params().tensors());
}

Trainer::Trainer(const Checkpoint& checkpoint, const DataSource& data)
    : Trainer(checkpoint.config(), data) {
  restore(checkpoint);
}

Batch Trainer::draw_batch(Rng& rng, FactorSampler& sampler) const {
  Batch b;
  for (int k = 0; k < config_.batch_size; ++k) {
    const auto idx = static_cast<std::size_t>(rng.below(data_.size()));
    const bool flip = rng.uniform() < 0.5;
    const Image& src = data_.train(idx);
    b.gt.push_back(data_.flip && flip ? flip_horizontal(src) : src);
  }
  if (config_.fixed_s)
    b.factor = static_cast<int>(*config_.fixed_s);
  else
    b.factor = config_.factors[sampler.sample(rng)];
  for (const auto& gt : b.gt) b.lr_upscaled.push_back(degrade(gt, b.factor).lr_upscaled);
  return b;
}

StepMetrics Trainer::step() {
  const Batch batch = draw_batch(rng_, sampler_);
  const auto cond = ConditionFactor::from_raw(batch.factor, config_);
  const Tensor x = to_tensor(batch.lr_upscaled);
  const Tensor y = to_tensor(batch.gt);
  const LossWeights w = config_.loss_weights();
  GcfsrModel& G = *generator_;
  Discriminator& D = *discriminator_;

  const double lr_scale = config_.lr_scale(iteration_);

  StepMetrics m;
  m.s = batch.factor;

  GradTape tape_g;
  Tensor fake;
  {
    GradTape::Recording rec(tape_g);
    fake = G.forward(x, cond.s_norm, {.noise = &rng_});
  }

  if (w.adv > 0) {
    GradTape tape_d;
    {
      GradTape::Recording rec(tape_d);
      const Tensor loss_d = discriminator_loss(D(y), D(fake.detach()), w);
      m.loss_d = loss_d.item();
      tape_d.backward(loss_d);
    }
    auto grads = grads_of(tape_d, D.params());
    adam_step(D.params().tensors(), grads, adam_d_, adam_config(config_, config_.lr_d * lr_scale));
  }

  {
    GradTape::Recording rec(tape_g);
    D.params().set_requires_grad(false);
    Tensor logits;
    try {
      if (w.adv > 0) logits = D(fake);
    } catch (...) {
      D.params().set_requires_grad(true);
      throw;
    }
    D.params().set_requires_grad(true);
    const GeneratorLoss loss = generator_loss(fake, y, logits, phi_, w);
    m.loss_g = loss.total.item();
    m.l1 = loss.l1.item();
    m.perc = loss.perc.item();
    tape_g.backward(loss.total);
  }
  auto grads = grads_of(tape_g, G.params());
  adam_step(G.params().tensors(), grads, adam_g_, adam_config(config_, config_.lr_g * lr_scale));

  m.iteration = ++iteration_;
  history_.push_back(m);
  return m;
}

std::vector<double> Trainer::validate() const {
  std::vector<double> out;
  const auto& val = data_.validation();
  for (int f : config_.factors) {
    std::vector<Image> inputs;
    for (const auto& gt : val) inputs.push_back(degrade(gt, f).lr_upscaled);
    const Tensor pred = generator_->forward(to_tensor(inputs), ConditionFactor::from_raw(f, config_).s_norm);
    double total = 0;
    for (std::size_t i = 0; i < val.size(); ++i)
      total += psnr(quantized(to_image(pred, static_cast<std::int64_t>(i))), val[i]);
    out.push_back(total / static_cast<double>(val.size()));
  }
  return out;
}

std::string format_metrics_line(const StepMetrics& m, const std::vector<double>& val_psnr) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld\t%g\t%.6f\t%.6f\t%.6f\t%.6f", static_cast<long long>(m.iteration),
                m.s, m.loss_d, m.loss_g, m.l1, m.perc);
  std::string line = buf;
  for (double p : val_psnr) {
    std::snprintf(buf, sizeof(buf), "\t%.4f", p);
    line += buf;
  }
  return line;
}

void Trainer::train(const std::filesystem::path& out_dir,
                    const std::function<void(const StepMetrics&)>& on_step) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto log_path = out_dir / "metrics.tsv";
  // A fresh run starts a fresh log; a resumed run appends.
  std::ofstream log(log_path, iteration_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + log_path.string());
  while (iteration_ < config_.total_iters) {
    const StepMetrics m = step();
    if (on_step) on_step(m);
    if (m.iteration % config_.log_interval == 0) {
      log << format_metrics_line(m, validate()) << '\n';
      log.flush();
      if (!log) throw IoError("write failed for " + log_path.string());
    }
    if (m.iteration % config_.checkpoint_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06lld.gcfs", static_cast<long long>(m.iteration));
      checkpoint().save(out_dir / name);
    }
  }
  checkpoint().save(out_dir / "final.gcfs");
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = config_.canonical();
  c.iteration = static_cast<std::uint64_t>(iteration_);
  c.rng_state = rng_.state();
  add_params(c, "g/", generator_->params());
  add_params(c, "d/", discriminator_->params());
  add_adam(c, "adam_g/", generator_->params(), adam_g_);
  add_adam(c, "adam_d/", discriminator_->params(), adam_d_);
  c.counters.emplace_back("factor_sampler/calls", sampler_.calls());
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  load_params(c, "g/", generator_->params());
  load_params(c, "d/", discriminator_->params());
  load_adam(c, "adam_g/", generator_->params(), adam_g_);
  load_adam(c, "adam_d/", discriminator_->params(), adam_d_);
  sampler_.set_calls(c.counter("factor_sampler/calls"));
  rng_.set_state(c.rng_state);
  iteration_ = static_cast<std::int64_t>(c.iteration);
}

}  // namespace gcfsr
