//! The registerable strategy catalog: sweep kernels and data factories for
//! each hardware flavor. New variants implement the registry traits and are
//! registered under their selector triples; nothing else in the runtime
//! changes.

use crate::block::Block;
use crate::comm::pdf_data_kind;
use crate::field::{Layout, PdfField};
use crate::params::LbmParams;
use crate::registry::{
    BlockGeometry, DataFactory, DispatchError, KernelError, Selector, SweepKernel,
};
use crate::scalar::Scalar;
use crate::staged::{StagedArena, StagedField};
use crate::sweep::{bounce_back, collide_stream_pull};

/// Work step on a plain host field: populate wall slots, then one fused
/// pull + collide sweep.
pub struct HostSweepKernel {
    layout: Layout,
}

impl HostSweepKernel {
    pub fn aos() -> Self {
        Self { layout: Layout::Aos }
    }

    pub fn soa() -> Self {
        Self { layout: Layout::Soa }
    }
}

impl<T: Scalar> SweepKernel<T> for HostSweepKernel {
    fn name(&self) -> &'static str {
        match self.layout {
            Layout::Aos => "host-aos",
            Layout::Soa => "host-soa",
        }
    }

    fn run(
        &self,
        block: &mut Block<T>,
        _arena: &mut StagedArena<T>,
        params: &LbmParams<T>,
    ) -> Result<(), KernelError> {
        let name = <Self as SweepKernel<T>>::name(self);
        let field: &mut PdfField<T> = block
            .find_mut(pdf_data_kind())
            .ok_or(DispatchError::WrongDataType { kernel: name })?;
        if field.layout() != self.layout {
            return Err(DispatchError::WrongDataType { kernel: name }.into());
        }
        bounce_back(field, params);
        collide_stream_pull(field, params)?;
        Ok(())
    }
}

/// Work step on a staged field: unpack incoming buffers, SoA sweep in the
/// arena, pack outgoing buffers, then host-side boundary handling.
pub struct StagedSweepKernel;

impl<T: Scalar> SweepKernel<T> for StagedSweepKernel {
    fn name(&self) -> &'static str {
        "staged-soa"
    }

    fn prime(
        &self,
        block: &mut Block<T>,
        arena: &mut StagedArena<T>,
        params: &LbmParams<T>,
    ) -> Result<(), KernelError> {
        let field: &StagedField<T> = block
            .find(pdf_data_kind())
            .ok_or(DispatchError::WrongDataType { kernel: "staged-soa" })?;
        field.prime(arena, params);
        Ok(())
    }

    fn run(
        &self,
        block: &mut Block<T>,
        arena: &mut StagedArena<T>,
        params: &LbmParams<T>,
    ) -> Result<(), KernelError> {
        let field: &mut StagedField<T> = block
            .find_mut(pdf_data_kind())
            .ok_or(DispatchError::WrongDataType { kernel: "staged-soa" })?;
        field.sweep(arena, params);
        Ok(())
    }
}

pub struct HostDataFactory {
    layout: Layout,
}

impl HostDataFactory {
    pub fn new(layout: Layout) -> Self {
        Self { layout }
    }
}

impl<T: Scalar> DataFactory<T> for HostDataFactory {
    fn name(&self) -> &'static str {
        "host-field"
    }

    fn allocate(
        &self,
        geom: &BlockGeometry<T>,
        _arena: &mut StagedArena<T>,
    ) -> Result<(Selector, Box<dyn crate::block::SimData<T>>), KernelError> {
        let mut field = PdfField::new(geom.extent, self.layout)?;
        field.copy_kinds(&geom.kinds);
        let mut k = 0;
        for z in 0..geom.extent[2] as i64 {
            for y in 0..geom.extent[1] as i64 {
                for x in 0..geom.extent[0] as i64 {
                    field.set_equilibrium([x, y, z], &geom.init[k]);
                    k += 1;
                }
            }
        }
        Ok((pdf_data_kind(), Box::new(field)))
    }
}

pub struct StagedDataFactory;

impl<T: Scalar> DataFactory<T> for StagedDataFactory {
    fn name(&self) -> &'static str {
        "staged-field"
    }

    fn allocate(
        &self,
        geom: &BlockGeometry<T>,
        arena: &mut StagedArena<T>,
    ) -> Result<(Selector, Box<dyn crate::block::SimData<T>>), KernelError> {
        let field = StagedField::new(geom, arena)?;
        Ok((pdf_data_kind(), Box::new(field)))
    }
}
