#pragma once

#include <cstdint>
#include <string>

namespace protex {

enum class Algorithm { Simple, Interleaved };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

/// Every hyperparameter of the two training procedures. Defaults reproduce the
/// published configuration (20 prototypes, one negative, lr 3e-5, batch 20).
struct TrainConfig {
  Algorithm algorithm = Algorithm::Interleaved;

  int num_prototypes = 20;
  int neg_prototypes = 1;
  int num_classes = 2;
  int latent_dim = 0;  // 0: same as the embedding dimension

  int iterations = 100;  // outer loop count k
  int delta_epochs = 1;
  int gamma_epochs = 1;
  int start_class = 1;  // class picked by the first epoch of each alternating loop

  double lambda1 = 0.9;
  double lambda2 = 0.9;
  double lambda_interleaved = 2.0;

  double lr = 3e-5;
  double encoder_lr = -1.0;  // learning rate of the projection; negative: same as lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.01;

  int batch_size = 20;
  std::uint64_t seed = 0;

  bool normalize = true;
  double norm_epsilon = 1e-5;
  int patience = 5;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Epochs consumed by one outer iteration.
  int epochs_per_iteration() const;

  double effective_encoder_lr() const { return encoder_lr < 0 ? lr : encoder_lr; }
};

}  // namespace protex
