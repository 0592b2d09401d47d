#pragma once

#include "pmala/adapters.hpp"
#include "pmala/config.hpp"
#include "pmala/diagnostics.hpp"
#include "pmala/experiment.hpp"
#include "pmala/io.hpp"
#include "pmala/kalman.hpp"
#include "pmala/lgss.hpp"
#include "pmala/math.hpp"
#include "pmala/mcmc.hpp"
#include "pmala/mixture.hpp"
#include "pmala/model.hpp"
#include "pmala/parallel.hpp"
#include "pmala/particle_filter.hpp"
#include "pmala/rng.hpp"
#include "pmala/score.hpp"
#include "pmala/score_study.hpp"
#include "pmala/targets.hpp"
#include "pmala/theory.hpp"
#include "pmala/transform.hpp"
