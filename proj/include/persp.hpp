#pragma once

#include "persp/error.hpp"
#include "persp/rng.hpp"
#include "persp/io.hpp"
#include "persp/corpus.hpp"
#include "persp/features.hpp"
#include "persp/batcher.hpp"
#include "persp/model.hpp"
#include "persp/objectives.hpp"
#include "persp/eval.hpp"
#include "persp/homophily.hpp"
#include "persp/synth.hpp"
#include "persp/trainer.hpp"
#include "persp/config.hpp"
#include "persp/pipeline.hpp"
