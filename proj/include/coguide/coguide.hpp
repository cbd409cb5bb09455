#pragma once

#include "coguide/config.hpp"
#include "coguide/corpus.hpp"
#include "coguide/graphs.hpp"
#include "coguide/hgat.hpp"
#include "coguide/metrics.hpp"
#include "coguide/model.hpp"
#include "coguide/nn.hpp"
#include "coguide/objectives.hpp"
#include "coguide/params.hpp"
#include "coguide/tape.hpp"
#include "coguide/tensor.hpp"
#include "coguide/train.hpp"
