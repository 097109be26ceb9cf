void solve_nbody(particles_block_t * local,
                 particles_block_t * tmp,
                 force_block_t * forces,
                 const int n_blocks,
                 const int timesteps,
                 const float time_interval)
{
   int rank, rank_size;
   MPI_Comm_rank(MPI_COMM_WORLD, &rank);
   MPI_Comm_size(MPI_COMM_WORLD, &rank_size);

   int t = 0;

   // Load local and t vars, if any.
   chk_begin_load();
   chk_register(0, "local", &local, 114688, "0+16", 1835008);
   chk_register(1, "t", &t, 4, "0+1", 4);
   chk_commit_load();

   for (; t < timesteps; t++) {
       #pragma oss task inout([n_blocks] local)
       {
           // Store local and t vars, using t as id.
           // Each checkpoint done must be at level 4.
           // Checkpoint every 10 iterations.
           if (t % 10 == 0) {
             chk_begin_store(t, 4, CHK_FULL);
             chk_register(0, "local", &local, 114688, "0+16", 1835008);
             chk_register(1, "t", &t, 4, "0+1", 4);
             chk_commit_store();
           }
       }

       particles_block_t * remote = local;
       for(int i=0; i < rank_size; i++){
           #pragma oss task in([n_blocks] local,[n_blocks] remote) \
                            inout([n_blocks] forces)
           calculate_forces(forces, local, remote, n_blocks);

           #pragma oss task in([n_blocks] remote) \
                            out([n_blocks] tmp)
           exchange_particles(remote, tmp, n_blocks, rank, rank_size, i, t);

           remote=tmp;
       }

       #pragma oss task inout([n_blocks] local) inout([n_blocks] forces)
       update_particles(n_blocks, local, forces, time_interval);
   }
   #pragma oss taskwait
}
