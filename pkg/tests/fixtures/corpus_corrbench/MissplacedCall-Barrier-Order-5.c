#include <mpi.h>
int main(int argc, char **argv) {
  MPI_Init(&argc, &argv);
  /* MissplacedCall variant 5 */
  MPI_Finalize();
  return 0;
}
