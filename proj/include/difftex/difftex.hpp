#pragma once

#include "difftex/camera_geometry.hpp"
#include "difftex/field_types.hpp"
#include "difftex/geometry.hpp"
#include "difftex/image.hpp"
#include "difftex/losses.hpp"
#include "difftex/mapped_photo.hpp"
#include "difftex/metrics.hpp"
#include "difftex/optimizer.hpp"
#include "difftex/pipeline.hpp"
#include "difftex/png_io.hpp"
#include "difftex/preprocess.hpp"
#include "difftex/quality.hpp"
#include "difftex/scene.hpp"
#include "difftex/scene_io.hpp"
#include "difftex/synth.hpp"
#include "difftex/texture_field.hpp"
#include "difftex/visibility.hpp"
