#pragma once

#include "hydro_embed/checkpoint.hpp"
#include "hydro_embed/config.hpp"
#include "hydro_embed/date.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/eval.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/net.hpp"
#include "hydro_embed/optim.hpp"
#include "hydro_embed/pipeline.hpp"
#include "hydro_embed/rng.hpp"
#include "hydro_embed/synth.hpp"
#include "hydro_embed/train.hpp"
