#pragma once

#include "nf3d/attribute.hpp"
#include "nf3d/codec.hpp"
#include "nf3d/common.hpp"
#include "nf3d/compression.hpp"
#include "nf3d/config.hpp"
#include "nf3d/evaluation.hpp"
#include "nf3d/extraction.hpp"
#include "nf3d/field_oracle.hpp"
#include "nf3d/geometry.hpp"
#include "nf3d/io.hpp"
#include "nf3d/neural_field.hpp"
#include "nf3d/sampler.hpp"
#include "nf3d/training.hpp"
