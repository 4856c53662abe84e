#pragma once

#include "mrens/base_learner.hpp"
#include "mrens/dataset.hpp"
#include "mrens/ensemble.hpp"
#include "mrens/entropy_sampler.hpp"
#include "mrens/error.hpp"
#include "mrens/label.hpp"
#include "mrens/matrix.hpp"
#include "mrens/metrics.hpp"
#include "mrens/preprocess.hpp"
#include "mrens/random.hpp"
#include "mrens/text.hpp"
#include "mrens/volume_io.hpp"
