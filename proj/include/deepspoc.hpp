#pragma once

#include "deepspoc/adam.hpp"
#include "deepspoc/baselines.hpp"
#include "deepspoc/checkpoint.hpp"
#include "deepspoc/config.hpp"
#include "deepspoc/coupling_flow.hpp"
#include "deepspoc/density_model.hpp"
#include "deepspoc/diagnostics.hpp"
#include "deepspoc/error.hpp"
#include "deepspoc/fourier.hpp"
#include "deepspoc/measure_view.hpp"
#include "deepspoc/mlp_density.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/nn.hpp"
#include "deepspoc/objectives.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/plots.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/problems.hpp"
#include "deepspoc/rectify.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/runner.hpp"
#include "deepspoc/sde_engine.hpp"
#include "deepspoc/trainer.hpp"
#include "deepspoc/training_sets.hpp"
#include "deepspoc/types.hpp"
