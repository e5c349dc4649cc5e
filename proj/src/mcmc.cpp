#include "dpmqte/mcmc.hpp"

#include "dpmqte/error.hpp"

namespace dpmqte {

void validate(const McmcSettings& m) {
  if (m.nskip < 0) throw InvalidArgument("nskip must be >= 0");
  if (m.ndpost < 1) throw InvalidArgument("ndpost must be >= 1");
  if (m.keepevery < 1) throw InvalidArgument("keepevery must be >= 1");
}

}  // namespace dpmqte
