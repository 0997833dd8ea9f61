#pragma once

#include <string>

#include "medlab/model.hpp"
#include "medlab/vocab.hpp"

namespace medlab {

// Versioned JSON container ("medlab-checkpoint-v1") holding the vocabulary,
// the architecture hyperparameters and the flat parameter vector.
struct Checkpoint {
  Vocabulary vocab;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const Vocabulary& vocab,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace medlab
