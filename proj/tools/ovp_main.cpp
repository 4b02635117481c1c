#include <cstdio>

int main() {
  std::puts("ovp: cli not wired yet");
  return 0;
}
