#pragma once

#include "koopdec/deep.hpp"
#include "koopdec/gramians.hpp"
#include "koopdec/koopman.hpp"
#include "koopdec/partition.hpp"
#include "koopdec/pipeline.hpp"
#include "koopdec/systems.hpp"
#include "koopdec/verify.hpp"
