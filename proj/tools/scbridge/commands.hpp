#pragma once

#include "config.hpp"

namespace scbridge::cli {

void cmd_synth(const Config& cfg);
void cmd_train(const Config& cfg);
void cmd_generate(const Config& cfg);
void cmd_evaluate(const Config& cfg);

}  // namespace scbridge::cli
