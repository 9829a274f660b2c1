#pragma once

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/experiment.hpp"
#include "fqesel/generators.hpp"
#include "fqesel/kernel.hpp"
#include "fqesel/manifest.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/mdp_io.hpp"
#include "fqesel/operators.hpp"
#include "fqesel/parallel.hpp"
#include "fqesel/rng.hpp"
#include "fqesel/selector.hpp"
