#include <cstdio>

int main() {
  std::puts("vdmask: under construction");
  return 0;
}
