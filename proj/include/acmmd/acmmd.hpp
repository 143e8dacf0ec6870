#pragma once

#include "acmmd/sequence.hpp"
#include "acmmd/kernels.hpp"
#include "acmmd/rng.hpp"
#include "acmmd/parallel.hpp"
#include "acmmd/sample_set.hpp"
#include "acmmd/estimator.hpp"
#include "acmmd/hypothesis_test.hpp"
#include "acmmd/reliability.hpp"
#include "acmmd/toy.hpp"
#include "acmmd/dataset.hpp"
#include "acmmd/experiment.hpp"
