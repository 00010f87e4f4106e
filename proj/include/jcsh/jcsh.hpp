#ifndef JCSH_JCSH_HPP
#define JCSH_JCSH_HPP

#include "cli.hpp"
#include "config.hpp"
#include "error.hpp"
#include "fit.hpp"
#include "homodyne.hpp"
#include "jc_model.hpp"
#include "liouville.hpp"
#include "operators.hpp"
#include "pipelines.hpp"
#include "sweep.hpp"
#include "version.hpp"

#endif
