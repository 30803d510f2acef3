namespace gkelab {}
