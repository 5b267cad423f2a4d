#pragma once

#include "salite/ops/attend.hpp"
#include "salite/ops/conv.hpp"
#include "salite/ops/elementwise.hpp"
#include "salite/ops/layout.hpp"
#include "salite/ops/lstm.hpp"
#include "salite/ops/pool.hpp"
#include "salite/ops/resize.hpp"
#include "salite/ops/softmax.hpp"
#include "salite/tape.hpp"
