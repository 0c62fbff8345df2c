#pragma once

#include "nrd/domain.hpp"
#include "nrd/errors.hpp"
#include "nrd/features.hpp"
#include "nrd/grad.hpp"
#include "nrd/image.hpp"
#include "nrd/laplacian.hpp"
#include "nrd/manifold.hpp"
#include "nrd/model.hpp"
#include "nrd/model_io.hpp"
#include "nrd/rng.hpp"
#include "nrd/seed.hpp"
#include "nrd/step.hpp"
#include "nrd/texture.hpp"
#include "nrd/trainer.hpp"
