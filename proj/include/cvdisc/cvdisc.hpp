#pragma once

// Collective-variable discovery: deep latent-variable model over atomistic
// configurations, trained by stochastic variational inference, with
// ARD-sparsified decoder, Laplace parameter posterior, Metropolis-within-Gibbs
// prediction, and observable estimation with credible intervals.

#include "cvdisc/ard.hpp"
#include "cvdisc/checkpoint.hpp"
#include "cvdisc/config.hpp"
#include "cvdisc/data_io.hpp"
#include "cvdisc/errors.hpp"
#include "cvdisc/laplace.hpp"
#include "cvdisc/nn.hpp"
#include "cvdisc/observables.hpp"
#include "cvdisc/parallel.hpp"
#include "cvdisc/rng.hpp"
#include "cvdisc/sampler.hpp"
#include "cvdisc/table_io.hpp"
#include "cvdisc/trainer.hpp"
#include "cvdisc/vae.hpp"
