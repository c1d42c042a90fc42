#pragma once

#include "kcf/core.hpp"
#include "kcf/linalg.hpp"
#include "kcf/expression.hpp"
#include "kcf/dictionary.hpp"
#include "kcf/regression.hpp"
#include "kcf/consistency.hpp"
#include "kcf/predictor.hpp"
#include "kcf/systems.hpp"
#include "kcf/learning/mlp.hpp"
#include "kcf/learning/neural.hpp"
#include "kcf/learning/loss.hpp"
#include "kcf/learning/optimizer.hpp"
#include "kcf/learning/train.hpp"
#include "kcf/io.hpp"
