#include "privtrans/distill.h"

#include <cmath>
#include <numeric>

#include "privtrans/errors.h"

namespace privtrans {

namespace {

void CheckProxy(const std::vector<PairedSample>& proxy) {
  if (proxy.empty()) throw ConfigError("distillation needs proxy samples");
  for (const auto& s : proxy) {
    if (s.has_target()) {
      throw ConfigError("proxy sample " + s.id() + " carries a ground truth");
    }
  }
}

std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed,
                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).Split(0xD157).Split(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);
  return order;
}

void FinishEpoch(DistillEpochLog& log, std::size_t n, int epoch,
                 std::vector<DistillEpochLog>& out) {
  log.ds_loss /= static_cast<double>(n);
  log.gs_loss /= static_cast<double>(n);
  log.imitation_l1 /= static_cast<double>(n);
  if (!std::isfinite(log.ds_loss) || !std::isfinite(log.gs_loss)) {
    throw TrainingError(epoch, "distillation loss became non-finite in epoch " +
                                   std::to_string(epoch));
  }
  out.push_back(log);
}

}  // namespace

void DistillConfig::Validate() const {
  if (epochs < 1) throw ConfigError("distill epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("distill batch_size must be >= 1");
  if (lambda < 0.0) throw ConfigError("distill lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("distill lr must be positive");
}

ImageTensor BlackBoxTeacher::Query(const ImageTensor& x, Rng& rng) const {
  queries_.fetch_add(1);
  return GenForward(teacher_, x, rng);
}

Var StudentGLossGraph(const DiscriminatorArch& arch,
                      const std::vector<Var>& d_params, Var student,
                      Var teacher_out, Var x, double lambda,
                      StudentAdversarialTerm term) {
  if (term == StudentAdversarialTerm::kNonSaturating) {
    return GeneratorLossGraph(arch, d_params, student, teacher_out, x, lambda);
  }
  Tape& tape = *x.tape;
  const Var log_d =
      ops::Log(DiscriminatorGraph(tape, arch, d_params, student, x));
  if (lambda == 0.0) return log_d;
  return ops::Add(log_d,
                  ops::Scale(ops::MeanAbsDiff(student, teacher_out), lambda));
}

Var DmpLossGraph(Var student, Var teacher_out) {
  return ops::MeanAbsDiff(student, teacher_out);
}

double StudentDLoss(const DiscriminatorModel& d_s, const GeneratorModel& g_s,
                    const BlackBoxTeacher& teacher, const ImageTensor& x,
                    Rng& rng) {
  Rng z = rng;
  const ImageTensor t_out = teacher.Query(x, z);
  Tape tape;
  const auto gp = tape.Bind(g_s.params, false);
  const auto dp = tape.Bind(d_s.params, false);
  const Var xv = tape.Leaf(x.tensor(), false);
  const Var s_out = GeneratorGraph(tape, g_s.arch, gp, xv, rng, g_s.dropout_active);
  return tape.value(DiscriminatorLossGraph(
      d_s.arch, dp, tape.Leaf(t_out.tensor(), false), s_out, xv))[0];
}

double StudentGLoss(const DiscriminatorModel& d_s, const GeneratorModel& g_s,
                    const BlackBoxTeacher& teacher, const ImageTensor& x,
                    double lambda, Rng& rng, StudentAdversarialTerm term) {
  Rng z = rng;
  const ImageTensor t_out = teacher.Query(x, z);
  Tape tape;
  const auto gp = tape.Bind(g_s.params, false);
  const auto dp = tape.Bind(d_s.params, false);
  const Var xv = tape.Leaf(x.tensor(), false);
  const Var s_out = GeneratorGraph(tape, g_s.arch, gp, xv, rng, g_s.dropout_active);
  return tape.value(StudentGLossGraph(d_s.arch, dp, s_out,
                                         tape.Leaf(t_out.tensor(), false), xv,
                                         lambda, term))[0];
}

DistillResult AkdTrain(const BlackBoxTeacher& teacher,
                       const std::vector<PairedSample>& proxy,
                       const GeneratorArch& student_arch,
                       const DistillConfig& cfg) {
  cfg.Validate();
  CheckProxy(proxy);
  GeneratorModel g = InitGenerator(student_arch, Mix64(cfg.seed ^ 0x53545544));
  DiscriminatorModel d = InitDiscriminator(
      DiscriminatorFor(student_arch, cfg.disc_base_channels),
      Mix64(cfg.seed ^ 0x44535455));
  Adam g_opt(g.params, cfg.adam());
  Adam d_opt(d.params, cfg.adam());
  const Rng step_root = Rng(cfg.seed).Split(0xA6D5);

  DistillResult result;
  std::uint64_t step = 0;
  const std::size_t n = proxy.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DistillEpochLog log{epoch, 0.0, 0.0, 0.0};
    const auto order = EpochOrder(n, cfg.seed, epoch);
    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        const Rng step_rng = step_root.Split(step);

        std::vector<std::vector<Tensor>> d_grads;
        for (std::size_t b = start; b < end; ++b) {
          const ImageTensor& x = proxy[order[b]].input();
          Rng z = step_rng.Split(2 * (b - start));
          Rng z_teacher = z;
          const ImageTensor t_out = teacher.Query(x, z_teacher);
          auto r = Gradient(
              [&](Tape& tape, const std::vector<Var>& dp) {
                const auto gp = tape.Bind(g.params, false);
                const Var xv = tape.Leaf(x.tensor(), false);
                const Var s_out = GeneratorGraph(tape, g.arch, gp, xv, z, true);
                return DiscriminatorLossGraph(
                    d.arch, dp, tape.Leaf(t_out.tensor(), false), s_out, xv);
              },
              d.params);
          log.ds_loss += r.loss;
          d_grads.push_back(std::move(r.grads));
        }
        Rng unused = step_rng.Split(0xD0);
        d_opt.Step(d.params, MeanAggregate(d_grads, unused));

        std::vector<std::vector<Tensor>> g_grads;
        for (std::size_t b = start; b < end; ++b) {
          const ImageTensor& x = proxy[order[b]].input();
          Rng z = step_rng.Split(2 * (b - start) + 1);
          Rng z_teacher = z;
          const ImageTensor t_out = teacher.Query(x, z_teacher);
          double l1 = 0.0;
          auto r = Gradient(
              [&](Tape& tape, const std::vector<Var>& gp) {
                const auto dp = tape.Bind(d.params, false);
                const Var xv = tape.Leaf(x.tensor(), false);
                const Var target = tape.Leaf(t_out.tensor(), false);
                const Var s_out = GeneratorGraph(tape, g.arch, gp, xv, z, true);
                l1 = tape.value(ops::MeanAbsDiff(s_out, target))[0];
                return StudentGLossGraph(d.arch, dp, s_out, target, xv,
                                            cfg.lambda, cfg.adversarial_term);
              },
              g.params);
          log.gs_loss += r.loss;
          log.imitation_l1 += l1;
          g_grads.push_back(std::move(r.grads));
        }
        g_opt.Step(g.params, MeanAggregate(g_grads, unused));
      }
    } catch (const NumericError& e) {
      throw TrainingError(epoch, "distillation diverged in epoch " +
                                     std::to_string(epoch) + ": " + e.what());
    }
    FinishEpoch(log, n, epoch, result.log);
  }
  result.student = std::move(g);
  return result;
}

DistillResult DmpTrain(const BlackBoxTeacher& teacher,
                       const std::vector<PairedSample>& proxy,
                       const GeneratorArch& student_arch,
                       const DistillConfig& cfg) {
  cfg.Validate();
  CheckProxy(proxy);
  GeneratorModel g = InitGenerator(student_arch, Mix64(cfg.seed ^ 0x53545544));
  Adam g_opt(g.params, cfg.adam());
  const Rng step_root = Rng(cfg.seed).Split(0xA6D5);

  DistillResult result;
  std::uint64_t step = 0;
  const std::size_t n = proxy.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DistillEpochLog log{epoch, 0.0, 0.0, 0.0};
    const auto order = EpochOrder(n, cfg.seed, epoch);
    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        const Rng step_rng = step_root.Split(step);
        std::vector<std::vector<Tensor>> g_grads;
        for (std::size_t b = start; b < end; ++b) {
          const ImageTensor& x = proxy[order[b]].input();
          Rng z = step_rng.Split(2 * (b - start) + 1);
          Rng z_teacher = z;
          const ImageTensor t_out = teacher.Query(x, z_teacher);
          auto r = Gradient(
              [&](Tape& tape, const std::vector<Var>& gp) {
                const Var xv = tape.Leaf(x.tensor(), false);
                const Var s_out = GeneratorGraph(tape, g.arch, gp, xv, z, true);
                return DmpLossGraph(s_out, tape.Leaf(t_out.tensor(), false));
              },
              g.params);
          log.gs_loss += r.loss;
          log.imitation_l1 += r.loss;
          g_grads.push_back(std::move(r.grads));
        }
        Rng unused = step_rng.Split(0x60);
        g_opt.Step(g.params, MeanAggregate(g_grads, unused));
      }
    } catch (const NumericError& e) {
      throw TrainingError(epoch, "distillation diverged in epoch " +
                                     std::to_string(epoch) + ": " + e.what());
    }
    FinishEpoch(log, n, epoch, result.log);
  }
  result.student = std::move(g);
  return result;
}

DistillResult Distill(const BlackBoxTeacher& teacher,
                      const std::vector<PairedSample>& proxy,
                      const GeneratorArch& student_arch,
                      const DistillConfig& cfg) {
  return cfg.mode == DistillMode::kAkd
             ? AkdTrain(teacher, proxy, student_arch, cfg)
             : DmpTrain(teacher, proxy, student_arch, cfg);
}

}  // namespace privtrans
