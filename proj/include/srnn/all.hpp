#pragma once

#include "srnn/baselines.hpp"
#include "srnn/data.hpp"
#include "srnn/error.hpp"
#include "srnn/eval.hpp"
#include "srnn/linalg.hpp"
#include "srnn/parallel.hpp"
#include "srnn/rng.hpp"
#include "srnn/rnn.hpp"
#include "srnn/srnn.hpp"
#include "srnn/story.hpp"
