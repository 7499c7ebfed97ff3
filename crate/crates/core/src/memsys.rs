//! Memory hierarchy: MCU segmentation, instruction and data caches, and the
//! memory-mapped device file.
//!
//! Software only ever sees CPU addresses (9 bits for data, 14 bits for
//! code). The MCU prepends two segment bits chosen by the active partition,
//! so identical CPU addresses used by different partitions land on distinct
//! physical words. Two data windows are decoded before segmentation and look
//! the same to every partition: the device window and the shared window.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::isa::{CODE_ADDR_MAX, DATA_ADDR_MAX};
use crate::{PartitionId, MAX_PARTITIONS};

pub const DATA_SEGMENT_WORDS: usize = 512;
pub const CODE_SEGMENT_WORDS: usize = 16384;
pub const SEGMENTS: usize = 4;
pub const SHARED_SEGMENT: u8 = 0b11;

pub const SAMPLING_PORT_BASE: u16 = 0x010;
pub const SAMPLING_PORTS: usize = 8;
pub const UART_TX: u16 = 0x018;
pub const TIMER_LOW: u16 = 0x019;
pub const PARTITION_ID: u16 = 0x01A;
pub const TIMER_HIGH: u16 = 0x01B;

/// An inclusive range of CPU-visible data addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: u16,
    pub end: u16,
}

impl Window {
    pub const fn contains(&self, addr: u16) -> bool {
        addr >= self.start && addr <= self.end
    }

    /// Whether `[start, start + len)` intersects the window.
    pub const fn overlaps(&self, start: u16, len: usize) -> bool {
        len > 0
            && (start as usize) <= self.end as usize
            && start as usize + len > self.start as usize
    }
}

/// Placement of the windows that bypass segmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionMap {
    pub device: Window,
    pub shared: Window,
}

impl Default for RegionMap {
    fn default() -> Self {
        RegionMap {
            device: Window {
                start: 0x010,
                end: 0x01F,
            },
            shared: Window {
                start: 0x1C0,
                end: 0x1FF,
            },
        }
    }
}

/// Memory-mapped device registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Device {
    SamplingPort(u8),
    UartTx,
    TimerLow,
    PartitionId,
    TimerHigh,
    Reserved(u16),
}

impl Device {
    fn decode(addr: u16) -> Device {
        match addr {
            a if (SAMPLING_PORT_BASE..SAMPLING_PORT_BASE + SAMPLING_PORTS as u16).contains(&a) => {
                Device::SamplingPort((a - SAMPLING_PORT_BASE) as u8)
            }
            UART_TX => Device::UartTx,
            TIMER_LOW => Device::TimerLow,
            PARTITION_ID => Device::PartitionId,
            TIMER_HIGH => Device::TimerHigh,
            a => Device::Reserved(a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    Data,
    Instruction,
}

/// Result of address translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Physical(u16),
    Device(Device),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemFault {
    /// A data access with no partition holding the pipeline.
    NoActivePartition,
    AddressOutOfRange(u16),
    ReadOnlyDevice(u16),
    PortOutOfRange(usize),
}

impl fmt::Display for MemFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemFault::NoActivePartition => {
                f.write_str("memory access while no partition is active")
            }
            MemFault::AddressOutOfRange(a) => write!(f, "address {a:#x} out of range"),
            MemFault::ReadOnlyDevice(a) => write!(f, "write to read-only device register {a:#05x}"),
            MemFault::PortOutOfRange(p) => write!(f, "sampling port {p} does not exist"),
        }
    }
}

impl core::error::Error for MemFault {}

/// The MCU: supplies the top two bits of every physical address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MemoryControlUnit {
    pub regions: RegionMap,
}

impl MemoryControlUnit {
    pub const fn segment_of(partition: PartitionId) -> u8 {
        partition.raw()
    }

    pub fn translate(
        &self,
        addr: u16,
        active: Option<PartitionId>,
        kind: AccessKind,
    ) -> Result<Target, MemFault> {
        match kind {
            AccessKind::Instruction => {
                if addr > CODE_ADDR_MAX {
                    return Err(MemFault::AddressOutOfRange(addr));
                }
                let p = active.ok_or(MemFault::NoActivePartition)?;
                Ok(Target::Physical(
                    ((Self::segment_of(p) as u16) << 14) | addr,
                ))
            }
            AccessKind::Data => {
                if addr > DATA_ADDR_MAX {
                    return Err(MemFault::AddressOutOfRange(addr));
                }
                let p = active.ok_or(MemFault::NoActivePartition)?;
                if self.regions.device.contains(addr) {
                    Ok(Target::Device(Device::decode(addr)))
                } else if self.regions.shared.contains(addr) {
                    Ok(Target::Physical(((SHARED_SEGMENT as u16) << 9) | addr))
                } else {
                    Ok(Target::Physical(((Self::segment_of(p) as u16) << 9) | addr))
                }
            }
        }
    }
}

/// Initial contents of a partition's data segment, as emitted by the assembler.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DataImage {
    pub base: u16,
    pub words: Vec<u32>,
}

impl DataImage {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, addr: u16) -> Option<u32> {
        let offset = addr.checked_sub(self.base)? as usize;
        self.words.get(offset).copied()
    }
}

/// Everything loaded for one partition at reset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionImage {
    pub code: Vec<u16>,
    pub data: DataImage,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadError {
    TooManyPartitions(usize),
    CodeTooLarge { partition: usize, words: usize },
    DataOutOfRange { partition: usize },
    DataOverlapsWindow { partition: usize, addr: u16 },
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::TooManyPartitions(n) => {
                write!(f, "{n} images given, at most {MAX_PARTITIONS} partitions exist")
            }
            LoadError::CodeTooLarge { partition, words } => write!(
                f,
                "partition {partition}: {words} code words exceed the {CODE_SEGMENT_WORDS}-word segment"
            ),
            LoadError::DataOutOfRange { partition } => {
                write!(f, "partition {partition}: data image runs past the segment end")
            }
            LoadError::DataOverlapsWindow { partition, addr } => write!(
                f,
                "partition {partition}: data image overlaps a device or shared window at {addr:#05x}"
            ),
        }
    }
}

impl core::error::Error for LoadError {}

/// Memory-mapped devices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviceFile {
    /// Free-running cycle counter.
    pub timer: u64,
    timer_high_latch: u32,
    /// Mirrors `ptr_c_flag2`.
    pub partition_id: u8,
    pub sampling_ports: [u32; SAMPLING_PORTS],
}

impl DeviceFile {
    fn new() -> Self {
        DeviceFile {
            timer: 0,
            timer_high_latch: 0,
            partition_id: 0,
            sampling_ports: [0; SAMPLING_PORTS],
        }
    }

    fn read(&mut self, device: Device) -> u32 {
        match device {
            Device::SamplingPort(p) => self.sampling_ports[p as usize],
            Device::TimerLow => {
                self.timer_high_latch = (self.timer >> 32) as u32;
                self.timer as u32
            }
            Device::TimerHigh => self.timer_high_latch,
            Device::PartitionId => self.partition_id as u32,
            Device::UartTx | Device::Reserved(_) => 0,
        }
    }
}

/// Side effect of a data write that the caller should record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeviceEffect {
    UartTx(u32),
}

/// Counters over every data access the memory system has served.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessAudit {
    pub reads: u64,
    pub writes: u64,
    /// Accesses that reached a protected segment other than the accessor's.
    pub foreign: u64,
}

#[derive(Clone, Debug)]
pub struct MemorySystem {
    pub mcu: MemoryControlUnit,
    icache: Vec<u16>,
    dcache: Vec<u32>,
    pub devices: DeviceFile,
    pub audit: AccessAudit,
}

impl Default for MemorySystem {
    fn default() -> Self {
        Self::new(RegionMap::default())
    }
}

impl MemorySystem {
    pub fn new(regions: RegionMap) -> Self {
        MemorySystem {
            mcu: MemoryControlUnit { regions },
            icache: vec![0; SEGMENTS * CODE_SEGMENT_WORDS],
            dcache: vec![0; SEGMENTS * DATA_SEGMENT_WORDS],
            devices: DeviceFile::new(),
            audit: AccessAudit::default(),
        }
    }

    /// Places each partition's code and data in its segment. Everything
    /// else, the shared window included, is zeroed.
    pub fn load_images(&mut self, images: &[PartitionImage]) -> Result<(), LoadError> {
        if images.len() > MAX_PARTITIONS {
            return Err(LoadError::TooManyPartitions(images.len()));
        }
        self.icache.iter_mut().for_each(|w| *w = 0);
        self.dcache.iter_mut().for_each(|w| *w = 0);
        for (i, image) in images.iter().enumerate() {
            if image.code.len() > CODE_SEGMENT_WORDS {
                return Err(LoadError::CodeTooLarge {
                    partition: i,
                    words: image.code.len(),
                });
            }
            let code_base = i * CODE_SEGMENT_WORDS;
            self.icache[code_base..code_base + image.code.len()].copy_from_slice(&image.code);

            let data = &image.data;
            if data.words.is_empty() {
                continue;
            }
            if data.base as usize + data.words.len() > DATA_SEGMENT_WORDS {
                return Err(LoadError::DataOutOfRange { partition: i });
            }
            let regions = self.mcu.regions;
            for window in [regions.device, regions.shared] {
                if window.overlaps(data.base, data.words.len()) {
                    return Err(LoadError::DataOverlapsWindow {
                        partition: i,
                        addr: window.start.max(data.base),
                    });
                }
            }
            let base = i * DATA_SEGMENT_WORDS + data.base as usize;
            self.dcache[base..base + data.words.len()].copy_from_slice(&data.words);
        }
        Ok(())
    }

    pub fn translate(
        &self,
        addr: u16,
        active: Option<PartitionId>,
        kind: AccessKind,
    ) -> Result<Target, MemFault> {
        self.mcu.translate(addr, active, kind)
    }

    /// Reads the instruction word at a CPU code address of `partition`.
    pub fn fetch(&self, partition: PartitionId, addr: u16) -> u16 {
        let phys = ((partition.raw() as usize) << 14) | (addr as usize & CODE_ADDR_MAX as usize);
        self.icache[phys]
    }

    fn audit_physical(&mut self, phys: u16, active: PartitionId) {
        let segment = (phys >> 9) as u8;
        if segment != SHARED_SEGMENT && segment != MemoryControlUnit::segment_of(active) {
            self.audit.foreign += 1;
        }
    }

    pub fn data_read(&mut self, addr: u16, active: Option<PartitionId>) -> Result<u32, MemFault> {
        let target = self.translate(addr, active, AccessKind::Data)?;
        self.audit.reads += 1;
        Ok(match target {
            Target::Physical(phys) => {
                self.audit_physical(phys, active.expect("translation checked activity"));
                self.dcache[phys as usize]
            }
            Target::Device(d) => self.devices.read(d),
        })
    }

    pub fn data_write(
        &mut self,
        addr: u16,
        value: u32,
        active: Option<PartitionId>,
    ) -> Result<Option<DeviceEffect>, MemFault> {
        let target = self.translate(addr, active, AccessKind::Data)?;
        self.audit.writes += 1;
        match target {
            Target::Physical(phys) => {
                self.audit_physical(phys, active.expect("translation checked activity"));
                self.dcache[phys as usize] = value;
                Ok(None)
            }
            Target::Device(Device::UartTx) => Ok(Some(DeviceEffect::UartTx(value))),
            Target::Device(_) => Err(MemFault::ReadOnlyDevice(addr)),
        }
    }

    pub fn inject_sample(&mut self, port: usize, value: u32) -> Result<(), MemFault> {
        let slot = self
            .devices
            .sampling_ports
            .get_mut(port)
            .ok_or(MemFault::PortOutOfRange(port))?;
        *slot = value;
        Ok(())
    }

    /// Raw view of one segment of the data cache.
    pub fn data_segment(&self, segment: u8) -> &[u32] {
        let base = segment as usize * DATA_SEGMENT_WORDS;
        &self.dcache[base..base + DATA_SEGMENT_WORDS]
    }

    /// The shared window as seen by any partition.
    pub fn shared_window(&self) -> &[u32] {
        let w = self.mcu.regions.shared;
        let base = SHARED_SEGMENT as usize * DATA_SEGMENT_WORDS;
        &self.dcache[base + w.start as usize..=base + w.end as usize]
    }

    pub fn code_segment(&self, partition: PartitionId) -> &[u16] {
        let base = partition.index() * CODE_SEGMENT_WORDS;
        &self.icache[base..base + CODE_SEGMENT_WORDS]
    }

    pub fn instruction_cache(&self) -> &[u16] {
        &self.icache
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u8) -> Option<PartitionId> {
        PartitionId::new(i)
    }

    // Segment bits, then the 9-bit address.
    #[test]
    #[allow(clippy::unusual_byte_groupings)]
    fn protected_address_gets_segment_bits() {
        let mcu = MemoryControlUnit::default();
        assert_eq!(
            mcu.translate(0x0A0, p(1), AccessKind::Data),
            Ok(Target::Physical(0b01_0_1010_0000))
        );
        assert_eq!(
            mcu.translate(0x0A0, p(2), AccessKind::Data),
            Ok(Target::Physical(0b10_0_1010_0000))
        );
    }

    #[test]
    fn device_window_bypasses_segmentation() {
        let mcu = MemoryControlUnit::default();
        for i in 0..3 {
            assert_eq!(
                mcu.translate(0x019, p(i), AccessKind::Data),
                Ok(Target::Device(Device::TimerLow))
            );
        }
        assert_eq!(
            mcu.translate(0x018, p(0), AccessKind::Data),
            Ok(Target::Device(Device::UartTx))
        );
        assert_eq!(
            mcu.translate(0x015, p(0), AccessKind::Data),
            Ok(Target::Device(Device::SamplingPort(5)))
        );
    }

    #[test]
    fn shared_window_is_common() {
        let mcu = MemoryControlUnit::default();
        let a = mcu.translate(0x1C0, p(0), AccessKind::Data).unwrap();
        let b = mcu.translate(0x1C0, p(2), AccessKind::Data).unwrap();
        assert_eq!(a, Target::Physical(0x7C0));
        assert_eq!(a, b);
    }

    #[test]
    fn idle_access_faults() {
        let mcu = MemoryControlUnit::default();
        assert_eq!(
            mcu.translate(0x100, None, AccessKind::Data),
            Err(MemFault::NoActivePartition)
        );
        assert_eq!(
            mcu.translate(0x200, p(0), AccessKind::Data),
            Err(MemFault::AddressOutOfRange(0x200))
        );
    }

    #[test]
    fn instruction_addresses_extend_to_sixteen_bits() {
        let mcu = MemoryControlUnit::default();
        assert_eq!(
            mcu.translate(0x3FFF, p(2), AccessKind::Instruction),
            Ok(Target::Physical(0xBFFF))
        );
    }

    #[test]
    fn uart_and_read_only_devices() {
        let mut mem = MemorySystem::default();
        assert_eq!(
            mem.data_write(UART_TX, 7, p(0)),
            Ok(Some(DeviceEffect::UartTx(7)))
        );
        assert_eq!(
            mem.data_write(TIMER_LOW, 1, p(0)),
            Err(MemFault::ReadOnlyDevice(TIMER_LOW))
        );
        assert_eq!(
            mem.data_write(PARTITION_ID, 1, p(0)),
            Err(MemFault::ReadOnlyDevice(PARTITION_ID))
        );
        assert_eq!(
            mem.data_write(0x010, 1, p(0)),
            Err(MemFault::ReadOnlyDevice(0x010))
        );
    }

    #[test]
    fn timer_reads_and_latch() {
        let mut mem = MemorySystem::default();
        mem.devices.timer = 41;
        let a = mem.data_read(TIMER_LOW, p(0)).unwrap();
        mem.devices.timer += 1;
        let b = mem.data_read(TIMER_LOW, p(0)).unwrap();
        assert_eq!(b - a, 1);

        mem.devices.timer = (3u64 << 32) | 5;
        assert_eq!(mem.data_read(TIMER_LOW, p(1)), Ok(5));
        mem.devices.timer = 9u64 << 32;
        assert_eq!(mem.data_read(TIMER_HIGH, p(1)), Ok(3));
    }

    #[test]
    fn partition_id_register() {
        let mut mem = MemorySystem::default();
        mem.devices.partition_id = 2;
        assert_eq!(mem.data_read(PARTITION_ID, p(2)), Ok(2));
    }

    #[test]
    fn sampling_ports_hold_latest_value() {
        let mut mem = MemorySystem::default();
        assert_eq!(mem.data_read(0x010, p(0)), Ok(0));
        mem.inject_sample(0, 42).unwrap();
        assert_eq!(mem.data_read(0x010, p(0)), Ok(42));
        assert_eq!(mem.data_read(0x010, p(2)), Ok(42));
        mem.inject_sample(0, 1).unwrap();
        mem.inject_sample(0, 2).unwrap();
        assert_eq!(mem.data_read(0x010, p(1)), Ok(2));
        assert_eq!(mem.inject_sample(8, 0), Err(MemFault::PortOutOfRange(8)));
    }

    #[test]
    fn images_land_in_their_segments() {
        let mut mem = MemorySystem::default();
        let images: Vec<PartitionImage> = (0..3)
            .map(|i| PartitionImage {
                code: vec![0x1100 + i as u16; CODE_SEGMENT_WORDS],
                data: DataImage {
                    base: 0x020,
                    words: vec![100 + i; 4],
                },
            })
            .collect();
        mem.load_images(&images).unwrap();
        for i in 0..3u8 {
            let pid = PartitionId::new(i).unwrap();
            assert_eq!(mem.fetch(pid, 0), 0x1100 + i as u16);
            assert_eq!(mem.fetch(pid, 0x3FFF), 0x1100 + i as u16);
            assert_eq!(mem.data_read(0x020, Some(pid)), Ok(100 + i as u32));
            assert_eq!(mem.data_read(0x024, Some(pid)), Ok(0));
        }
        assert!(mem.shared_window().iter().all(|&w| w == 0));
        assert_eq!(mem.audit.foreign, 0);
    }

    #[test]
    fn empty_data_image_zero_fills() {
        let mut mem = MemorySystem::default();
        mem.load_images(&[PartitionImage::default()]).unwrap();
        assert!(mem.data_segment(0).iter().all(|&w| w == 0));
    }

    #[test]
    fn load_errors() {
        let mut mem = MemorySystem::default();
        let too_big = PartitionImage {
            code: vec![0; CODE_SEGMENT_WORDS + 1],
            ..Default::default()
        };
        assert_eq!(
            mem.load_images(&[too_big]),
            Err(LoadError::CodeTooLarge {
                partition: 0,
                words: CODE_SEGMENT_WORDS + 1
            })
        );
        let over_device = PartitionImage {
            data: DataImage {
                base: 0x00C,
                words: vec![1; 8],
            },
            ..Default::default()
        };
        assert_eq!(
            mem.load_images(&[over_device]),
            Err(LoadError::DataOverlapsWindow {
                partition: 0,
                addr: 0x010
            })
        );
        let over_shared = PartitionImage {
            data: DataImage {
                base: 0x1BF,
                words: vec![1; 2],
            },
            ..Default::default()
        };
        assert!(matches!(
            mem.load_images(&[over_shared]),
            Err(LoadError::DataOverlapsWindow { .. })
        ));
        let past_end = PartitionImage {
            data: DataImage {
                base: 0x1FF,
                words: vec![1; 2],
            },
            ..Default::default()
        };
        assert_eq!(
            mem.load_images(&[past_end]),
            Err(LoadError::DataOutOfRange { partition: 0 })
        );
        let four = vec![PartitionImage::default(); 4];
        assert_eq!(mem.load_images(&four), Err(LoadError::TooManyPartitions(4)));
    }
}
