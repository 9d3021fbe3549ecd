#pragma once

#include "arn/checkpoint.hpp"
#include "arn/corpus.hpp"
#include "arn/distributions.hpp"
#include "arn/divergence_lab.hpp"
#include "arn/errors.hpp"
#include "arn/gradcheck.hpp"
#include "arn/metrics.hpp"
#include "arn/networks.hpp"
#include "arn/objectives.hpp"
#include "arn/optim.hpp"
#include "arn/rng.hpp"
#include "arn/tensor.hpp"
#include "arn/train.hpp"
