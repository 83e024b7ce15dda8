#pragma once

#include "avdf/audio.hpp"
#include "avdf/autodiff.hpp"
#include "avdf/checkpoint.hpp"
#include "avdf/config.hpp"
#include "avdf/error.hpp"
#include "avdf/experiment.hpp"
#include "avdf/features.hpp"
#include "avdf/layers.hpp"
#include "avdf/log.hpp"
#include "avdf/losses.hpp"
#include "avdf/mfcc.hpp"
#include "avdf/model.hpp"
#include "avdf/networks.hpp"
#include "avdf/optimizer.hpp"
#include "avdf/parameters.hpp"
#include "avdf/scorer.hpp"
#include "avdf/synth.hpp"
#include "avdf/tensor.hpp"
#include "avdf/trainer.hpp"
