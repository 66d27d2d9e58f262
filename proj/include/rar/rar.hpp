#pragma once

#include "rar/checkpoint.hpp"
#include "rar/codec.hpp"
#include "rar/config.hpp"
#include "rar/dataset.hpp"
#include "rar/degrade.hpp"
#include "rar/eval.hpp"
#include "rar/harness.hpp"
#include "rar/image.hpp"
#include "rar/lqa.hpp"
#include "rar/metrics.hpp"
#include "rar/params.hpp"
#include "rar/rar_loop.hpp"
#include "rar/rng.hpp"
#include "rar/tape.hpp"
#include "rar/tensor.hpp"
#include "rar/uir.hpp"
