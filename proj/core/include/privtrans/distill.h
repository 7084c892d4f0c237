#ifndef PRIVTRANS_DISTILL_H_
#define PRIVTRANS_DISTILL_H_

#include <atomic>
#include <cstdint>
#include <vector>

#include "privtrans/cgan.h"
#include "privtrans/dataset.h"
#include "privtrans/nets.h"

namespace privtrans {

enum class DistillMode { kAkd, kDmp };

// First term of the student generator loss. kNonSaturating minimizes
// -log D_s(G_s(z,x), x) so the student is pushed to fool D_s. kLogD
// minimizes +log D_s(G_s(z,x), x) literally; kept for ablations only.
enum class StudentAdversarialTerm { kNonSaturating, kLogD };

struct DistillConfig {
  DistillMode mode = DistillMode::kAkd;
  int epochs = 200;
  int batch_size = 1;
  double lambda = 100.0;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int disc_base_channels = 16;
  StudentAdversarialTerm adversarial_term = StudentAdversarialTerm::kNonSaturating;

  void Validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
};

// The only handle distillation gets on the teacher: forward queries. The
// counter records every query so callers can audit the access pattern.
class BlackBoxTeacher {
 public:
  explicit BlackBoxTeacher(const GeneratorModel& teacher) : teacher_(teacher) {}

  ImageTensor Query(const ImageTensor& x, Rng& rng) const;
  std::uint64_t queries() const { return queries_.load(); }

 private:
  const GeneratorModel& teacher_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

struct DistillEpochLog {
  int epoch = 0;
  double ds_loss = 0.0;  // zero for DMP, which has no discriminator
  double gs_loss = 0.0;
  double imitation_l1 = 0.0;
};

struct DistillResult {
  GeneratorModel student;
  std::vector<DistillEpochLog> log;
};

// -[log D_s(G_t(z,x), x) + log(1 - D_s(G_s(z,x), x))]. Teacher and student
// read the same noise: both start from a copy of `rng`.
double StudentDLoss(const DiscriminatorModel& d_s, const GeneratorModel& g_s,
                    const BlackBoxTeacher& teacher, const ImageTensor& x,
                    Rng& rng);

// Adversarial term (see StudentAdversarialTerm) plus
// lambda * mean|G_s(z,x) - G_t(z,x)| under shared noise.
double StudentGLoss(const DiscriminatorModel& d_s, const GeneratorModel& g_s,
                    const BlackBoxTeacher& teacher, const ImageTensor& x,
                    double lambda, Rng& rng,
                    StudentAdversarialTerm term =
                        StudentAdversarialTerm::kNonSaturating);

// Graph forms behind the two student losses and the DMP objective.
Var StudentGLossGraph(const DiscriminatorArch& arch,
                      const std::vector<Var>& d_params, Var student,
                      Var teacher_out, Var x, double lambda,
                      StudentAdversarialTerm term);
// mean|student - teacher_out|.
Var DmpLossGraph(Var student, Var teacher_out);

// Adversarial distillation on unlabeled proxy inputs. A fresh student
// discriminator is trained per run; per minibatch one D_s update then one
// G_s update, with fresh noise for each sub-step. Throws ConfigError on
// labeled or empty proxy data and TrainingError on divergence.
DistillResult AkdTrain(const BlackBoxTeacher& teacher,
                       const std::vector<PairedSample>& proxy,
                       const GeneratorArch& student_arch,
                       const DistillConfig& cfg);

// Plain l1 imitation of the teacher over the proxy set; same optimizer and
// schedule as AkdTrain, no discriminator.
DistillResult DmpTrain(const BlackBoxTeacher& teacher,
                       const std::vector<PairedSample>& proxy,
                       const GeneratorArch& student_arch,
                       const DistillConfig& cfg);

// Dispatches on cfg.mode.
DistillResult Distill(const BlackBoxTeacher& teacher,
                      const std::vector<PairedSample>& proxy,
                      const GeneratorArch& student_arch,
                      const DistillConfig& cfg);

}  // namespace privtrans

#endif  // PRIVTRANS_DISTILL_H_
